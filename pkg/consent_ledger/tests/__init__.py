"""Tests for the consent ledger platform."""
