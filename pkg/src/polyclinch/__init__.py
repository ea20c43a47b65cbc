"""Clinching auctions for two-sided markets with polymatroidal supply."""

from .clinching import ClinchRule
from .market import (Allocation, Buyer, Market, Seller, example_market, load_market,
                     random_market, save_market)
from .mechanisms import RevenuePolicy, mechanism1, mechanism2

__all__ = [
    "Allocation", "Buyer", "ClinchRule", "Market", "RevenuePolicy", "Seller",
    "example_market", "load_market", "mechanism1", "mechanism2", "random_market", "save_market",
]
__version__ = "0.1.0"
