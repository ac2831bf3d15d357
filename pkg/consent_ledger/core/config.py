"""Configuration management for the consent ledger platform."""

from pathlib import Path
from typing import Literal, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, model_validator
from pydantic_settings import BaseSettings

from consent_ledger.core.errors import ConfigurationError


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Server Configuration
    server_name: str = "Consent Ledger"
    mcp_transport: Literal["stdio", "sse", "http"] = "sse"
    rs_host: str = Field(default="localhost", description="Resource server bind host")
    rs_port: int = Field(default=8080, description="Resource server bind port")
    rs_api_endpoint: str = Field(default="/ProfileManagement", description="Profile management API path")

    # Chain Configuration
    data_dir: Path = Field(default=Path("./data"), description="Chain exports, key fixtures and the document store")
    network_config_path: Optional[Path] = Field(None, description="KEY=value network configuration file")
    token_lifetime_s: int = Field(default=3600, description="Initial access token lifetime in seconds")
    seed: int = Field(default=7, description="Seed for the network simulator")
    genesis_time_ms: Optional[int] = Field(
        None, description="Clock origin in ms since epoch; wall clock when unset"
    )

    # Logging Configuration
    debug: bool = False
    log_level: str = "INFO"
    log_config_path: Path = Field(default=Path("config/logging.yml"), description="dictConfig YAML file")

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore"
    }


class NetworkConfig(BaseModel):
    """Topology, timing and fault-free defaults of the simulated network.

    All times are in simulated milliseconds. Defaults are calibrated so a
    4-peer deployment serves roughly 500 read proposals per second and the
    ordering service caps writes near 167 per second.
    """

    peer_count: int = Field(default=4, ge=1)
    osn_count: int = Field(default=3, ge=1)
    endorsement_quorum: Optional[int] = Field(
        default=None, ge=1, description="Endorsements required; all live peers when unset"
    )
    batch_size: int = Field(default=10, ge=1)
    batch_timeout_ms: float = Field(default=20.0, ge=0)
    hop_latency_ms: float = Field(default=1.0, ge=0)
    hop_jitter_ms: float = Field(default=0.2, ge=0)
    peer_service_ms: float = Field(default=1.2, ge=0)
    peer_overhead_ms: float = Field(default=0.2, ge=0)
    peer_commit_ms: float = Field(default=0.4, ge=0)
    osn_service_ms: float = Field(default=6.0, ge=0)
    client_timeout_ms: float = Field(default=2000.0, gt=0)
    client_count: int = Field(default=1000, ge=1)
    sign_endorsements: bool = True
    seed: int = 7

    model_config = {"frozen": True, "extra": "forbid"}

    @model_validator(mode="after")
    def _check_quorum(self) -> "NetworkConfig":
        if self.endorsement_quorum is not None and self.endorsement_quorum > self.peer_count:
            raise ValueError("endorsement_quorum cannot exceed peer_count")
        return self

    @property
    def endorsement_service_ms(self) -> float:
        """Per-proposal service time on one peer."""
        return self.peer_service_ms + self.peer_overhead_ms * self.peer_count


def load_network_config(path: Path) -> NetworkConfig:
    """Parse a KEY=value network file into a validated NetworkConfig."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError("network config file not found", str(path))

    raw = dotenv_values(path)
    values = {key.lower(): value for key, value in raw.items() if value is not None}
    try:
        return NetworkConfig(**values)
    except PydanticValidationError as e:
        raise ConfigurationError(str(e), str(path))


settings = Settings()
