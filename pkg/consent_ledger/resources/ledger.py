"""MCP resources for ledger heights and platform statistics."""

import json

from fastmcp import FastMCP

from consent_ledger.core.errors import ConsentError
from consent_ledger.services.workflows import get_deployment


def register_ledger_resources(mcp: FastMCP):
    """Register read-only ledger resources with the MCP server."""

    @mcp.resource("ledger://stats")
    async def get_ledger_stats() -> str:
        """Channel heights, registered datasets and resource server mutations."""
        return json.dumps(get_deployment().stats())

    @mcp.resource("ledger://{channel}/height")
    async def get_channel_height(channel: str) -> str:
        """Height and tip hash of one channel."""
        try:
            chain = get_deployment().platform.ledger.channel(channel)
        except ConsentError as e:
            return e.to_json()
        return json.dumps({"channel": channel, "height": chain.height, "tip_hash": chain.tip_hash})
