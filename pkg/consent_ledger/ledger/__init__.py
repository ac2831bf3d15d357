"""Hash-chained channel storage."""

from consent_ledger.ledger.chain import Channel, Ledger

__all__ = ["Channel", "Ledger"]
