"""MCP resources exposing ledger status."""
