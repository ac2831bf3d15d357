"""MCP tools for consent management workflows."""

import logging
from typing import Optional

from fastmcp import FastMCP

from consent_ledger.core.errors import ConsentError, create_success
from consent_ledger.services.workflows import get_deployment

logger = logging.getLogger(__name__)


def register_consent_tools(mcp: FastMCP):
    """Register the consent workflow tools with the MCP server.

    Parties are named by key fixture paths readable by the server process.
    """

    @mcp.tool(description="Register a dataset under a DS and DC; the DS creates the data-pointer keypair")
    async def register_dataset(ds_key: str, dc_key: str, dc_ops: Optional[str] = None) -> str:
        try:
            return create_success(get_deployment().register(ds_key, dc_key, dc_ops))
        except ConsentError as e:
            return e.to_json()

    @mcp.tool(description="Grant one operation on a dataset to a DP; DS, DC and DP all sign")
    async def grant_consent(ds_key: str, dc_key: str, dp_key: str, operation: str,
                            dataset_key: Optional[str] = None) -> str:
        try:
            return create_success(get_deployment().grant(ds_key, dc_key, dp_key, operation, dataset_key))
        except ConsentError as e:
            return e.to_json()

    @mcp.tool(description="Revoke one operation from a DP; signed by the DS or the DC")
    async def revoke_consent(signer_key: str, dp_key: str, operation: str,
                             dataset_key: Optional[str] = None) -> str:
        try:
            return create_success(get_deployment().revoke(signer_key, dp_key, operation, dataset_key))
        except ConsentError as e:
            return e.to_json()

    @mcp.tool(description="Request access for a DP and, when it holds sk_enc, call the resource server")
    async def access_data(dp_key: str, operation: str, dataset_key: Optional[str] = None,
                          payload: Optional[dict] = None) -> str:
        try:
            return create_success(await get_deployment().access(dp_key, operation, dataset_key, payload))
        except ConsentError as e:
            return e.to_json()

    @mcp.tool(description="Validate an access token for an operation on the log ledger")
    async def validate_token(holder_key: str, token: str, operation: str) -> str:
        try:
            return create_success(get_deployment().validate(holder_key, token, operation))
        except ConsentError as e:
            return e.to_json()

    @mcp.tool(description="Re-issue the caller's access token for a dataset")
    async def refresh_token(holder_key: str, dataset_key: Optional[str] = None) -> str:
        try:
            return create_success(get_deployment().refresh(holder_key, dataset_key))
        except ConsentError as e:
            return e.to_json()

    @mcp.tool(description="Query the audit trail by party, dataset and time range (ms since epoch)")
    async def audit_trail(
        owner: Optional[str] = None,
        controller: Optional[str] = None,
        processor: Optional[str] = None,
        party: Optional[str] = None,
        dataset_key: Optional[str] = None,
        since: Optional[int] = None,
        until: Optional[int] = None,
    ) -> str:
        result = get_deployment().audit(
            owner=owner, controller=controller, processor=processor, party=party,
            dataset_key=dataset_key, since=since, until=until,
        )
        result.pop("ndjson")
        return create_success(result)

    @mcp.tool(description="Recompute every block hash and link; reports the lowest corrupt height")
    async def verify_chain(channel: Optional[str] = None) -> str:
        try:
            return create_success(get_deployment().verify_chain(channel))
        except ConsentError as e:
            return e.to_json()
