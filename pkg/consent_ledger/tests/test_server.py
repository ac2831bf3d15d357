"""Tests for MCP server tools, resources and HTTP routes."""

import json

import httpx
import pytest

from consent_ledger import __version__
from consent_ledger.core.config import settings
from consent_ledger.core.errors import ConsentErrorCodes
from consent_ledger.server import create_mcp_server
from consent_ledger.services.fixtures import keygen


@pytest.fixture
def keys(tmp_path):
    key_dir = tmp_path / "keys"
    for name, role in (("alice", "ds"), ("acme", "dc"), ("analytics", "dp")):
        keygen(key_dir, name, role)
    return key_dir


@pytest.fixture
def client():
    app = create_mcp_server().http_app()
    return httpx.AsyncClient(transport=httpx.ASGITransport(app=app), base_url="http://testserver")


class TestMCPServer:
    """Test MCP server creation and tool registration."""

    async def test_create_mcp_server(self):
        """Test MCP server creation."""
        mcp = create_mcp_server()
        assert mcp.name == settings.server_name
        assert mcp.version == __version__

    async def test_all_tools_registered(self):
        """Test that every consent tool is registered."""
        tools = await create_mcp_server().get_tools()
        expected_tools = [
            "register_dataset",
            "grant_consent",
            "revoke_consent",
            "access_data",
            "validate_token",
            "refresh_token",
            "audit_trail",
            "verify_chain",
        ]
        for tool_name in expected_tools:
            assert tool_name in tools, f"Tool '{tool_name}' not registered"
            assert tools[tool_name].description

    async def test_resources_registered(self):
        """Test the stats resource and the per-channel height template."""
        mcp = create_mcp_server()
        assert "ledger://stats" in await mcp.get_resources()
        assert "ledger://{channel}/height" in await mcp.get_resource_templates()


class TestConsentTools:
    """Test consent tools against a file-backed deployment."""

    async def test_register_grant_and_audit(self, deployment, keys):
        """Test tools register a dataset, grant READ and show both in the trail."""
        tools = await create_mcp_server().get_tools()

        registered = json.loads(await tools["register_dataset"].fn(
            ds_key=str(keys / "alice.key"), dc_key=str(keys / "acme.key")))
        assert registered["accepted"]

        granted = json.loads(await tools["grant_consent"].fn(
            ds_key=str(keys / "alice.key"), dc_key=str(keys / "acme.key"),
            dp_key=str(keys / "analytics.key"), operation="read"))
        assert granted["accepted"]

        trail = json.loads(await tools["audit_trail"].fn(dataset_key=registered["dataset_key"]))
        assert [e["what"] for e in trail["entries"]] == ["registration", "grant_consent"]
        assert "ndjson" not in trail

        verified = json.loads(await tools["verify_chain"].fn())
        assert verified["ok"]

    async def test_missing_key_is_error_json(self, deployment, keys):
        """Test a missing key fixture comes back as a structured error."""
        tools = await create_mcp_server().get_tools()
        result = json.loads(await tools["register_dataset"].fn(
            ds_key=str(keys / "nobody.key"), dc_key=str(keys / "acme.key")))
        assert result["error"]["code"] == ConsentErrorCodes.MALFORMED_KEY

    async def test_unknown_channel(self, deployment):
        """Test verifying a channel that does not exist is an error."""
        tools = await create_mcp_server().get_tools()
        result = json.loads(await tools["verify_chain"].fn(channel="nope"))
        assert result["error"]["code"] == ConsentErrorCodes.UNKNOWN_CHANNEL


class TestLedgerResources:
    """Test read-only ledger resources."""

    async def test_stats_and_height(self, deployment, keys):
        """Test stats and channel height follow a registration."""
        deployment.register(keys / "alice.key", keys / "acme.key")
        mcp = create_mcp_server()

        stats = json.loads(await (await mcp.get_resources())["ledger://stats"].fn())
        assert stats["datasets"] == 1

        template = (await mcp.get_resource_templates())["ledger://{channel}/height"]
        height = json.loads(await template.fn(channel="3A_channel"))
        assert height["channel"] == "3A_channel"
        assert height["height"] == stats["heights"]["3A_channel"]


class TestRoutes:
    """Test the HTTP routes served next to the MCP endpoint."""

    async def test_health(self, deployment, client):
        """Test a healthy deployment reports 200 with its chain heights."""
        async with client:
            response = await client.get("/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "healthy"
        assert body["components"]["ledger"]["status"] == "healthy"

    async def test_profile_body_must_be_object(self, deployment, client):
        """Test a JSON payload that is not an object is a bad request."""
        async with client:
            response = await client.post(f"{settings.rs_api_endpoint}/profile-alice", content="[1, 2]")
        assert response.status_code == 400
        assert response.json()["body"]["reason"] == "bad_request"

    async def test_profile_missing_credentials(self, deployment, client):
        """Test a call without token, key and signature lists the missing parameters."""
        async with client:
            response = await client.get(f"{settings.rs_api_endpoint}/profile-alice",
                                        params={"operation": "read"})
        assert response.status_code == 400
        assert response.json()["body"]["missing"] == ["pubkey", "signature", "token"]
