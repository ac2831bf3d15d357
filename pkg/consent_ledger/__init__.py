"""
Consent Ledger

Consent management for personal data over two hash-chained ledgers: a 3A
ledger for authentication, authorization and access control, and a log
ledger for access tokens and the audit trail. Includes a simulated
permissioned network, a token-gated profile store and a benchmark harness.
"""

__version__ = "0.1.0"
__author__ = "Consent Ledger Team"
