"""MCP server exposing consent tools, ledger resources and the profile management API."""

import asyncio
import json
import logging
import sys
from datetime import datetime, timezone
from typing import Optional

from fastmcp import FastMCP
from starlette.requests import Request
from starlette.responses import JSONResponse

from consent_ledger import __version__
from consent_ledger.core.config import settings
from consent_ledger.core.log_config import setup_logging
from consent_ledger.models.profile import CONTENT_TYPE, ApiRequest, ApiResponse
from consent_ledger.resources.ledger import register_ledger_resources
from consent_ledger.services.workflows import get_deployment
from consent_ledger.tools.consent import register_consent_tools

logger = logging.getLogger(__name__)


async def _api_request(request: Request) -> ApiRequest:
    """Map an HTTP call onto the six-part API request."""
    raw = await request.body()
    payload = json.loads(raw) if raw.strip() else None
    if payload is not None and not isinstance(payload, dict):
        raise ValueError("payload must be a JSON object")
    return ApiRequest(
        api_endpoint=request.url.path,
        rest_endpoint=f"{request.url.hostname}:{request.url.port or settings.rs_port}",
        method=request.method,
        header={"Content-Type": request.headers.get("content-type", CONTENT_TYPE)},
        params=dict(request.query_params),
        payload=payload,
    )


def create_mcp_server() -> FastMCP:
    """Create and configure the MCP server instance."""
    mcp = FastMCP(name=settings.server_name, version=__version__)

    @mcp.custom_route("/health", methods=["GET"])
    async def health_check(request: Request) -> JSONResponse:
        """Liveness plus a chain integrity summary."""
        health_data = {
            "status": "healthy",
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "server": {"name": settings.server_name, "version": __version__},
            "components": {},
        }
        try:
            deployment = get_deployment()
            verdict = deployment.verify_chain()
            health_data["components"]["ledger"] = {
                "status": "healthy" if verdict["ok"] else "corrupt",
                "heights": deployment.platform.ledger.heights(),
            }
            if not verdict["ok"]:
                health_data["status"] = "unhealthy"
        except Exception as e:
            health_data["components"]["ledger"] = {"status": "unhealthy", "error": str(e)}
            health_data["status"] = "unhealthy"

        status_code = 200 if health_data["status"] == "healthy" else 503
        return JSONResponse(health_data, status_code=status_code)

    @mcp.custom_route(f"{settings.rs_api_endpoint}/{{profile_id}}", methods=["GET", "POST", "PUT", "DELETE"])
    async def profile_management(request: Request) -> JSONResponse:
        """Token-gated CRUD on one profile; the ``operation`` parameter selects the action."""
        try:
            api_request = await _api_request(request)
        except ValueError as e:
            response = ApiResponse.error("bad_request", detail=str(e))
            return JSONResponse(response.model_dump(mode="json"), status_code=response.http_status)

        deployment = get_deployment()
        response = await deployment.server.handle(api_request)
        deployment.save()
        return JSONResponse(response.model_dump(mode="json"), status_code=response.http_status)

    register_consent_tools(mcp)
    register_ledger_resources(mcp)
    return mcp


async def main(transport: Optional[str] = None):
    """Main server entry point."""
    setup_logging()
    mcp = create_mcp_server()

    transport = transport or settings.mcp_transport
    if len(sys.argv) > 1 and sys.argv[1] in ("stdio", "sse", "http"):
        transport = sys.argv[1]

    logger.info("Starting %s over %s on %s:%d", settings.server_name, transport, settings.rs_host, settings.rs_port)
    if transport == "stdio":
        await mcp.run_stdio_async()
    elif transport in ("sse", "http"):
        await mcp.run_http_async(transport=transport, host=settings.rs_host, port=settings.rs_port)
    else:
        raise ValueError(f"Unsupported transport method: {transport}")


if __name__ == "__main__":
    asyncio.run(main())
