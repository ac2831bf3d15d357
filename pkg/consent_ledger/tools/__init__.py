"""MCP tools for consent workflows."""
