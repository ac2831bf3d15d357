"""Tests for settings and network configuration."""

import os
from pathlib import Path
from unittest.mock import patch

import pytest
from pydantic import ValidationError as PydanticValidationError

from consent_ledger.core.config import NetworkConfig, Settings, load_network_config
from consent_ledger.core.errors import ConfigurationError


class TestSettings:
    """Test Settings loading from the environment."""

    def test_defaults(self):
        """Test defaults with an empty environment."""
        with patch.dict(os.environ, {}, clear=True):
            settings = Settings(_env_file=None)
            assert settings.rs_api_endpoint == "/ProfileManagement"
            assert settings.rs_port == 8080
            assert settings.token_lifetime_s == 3600
            assert settings.seed == 7
            assert settings.genesis_time_ms is None
            assert settings.log_level == "INFO"

    def test_env_overrides(self):
        """Test environment variables override defaults."""
        env_vars = {
            "DATA_DIR": "/tmp/ledger",
            "TOKEN_LIFETIME_S": "60",
            "GENESIS_TIME_MS": "1700000000000",
            "MCP_TRANSPORT": "stdio",
        }
        with patch.dict(os.environ, env_vars, clear=True):
            settings = Settings(_env_file=None)
            assert settings.data_dir == Path("/tmp/ledger")
            assert settings.token_lifetime_s == 60
            assert settings.genesis_time_ms == 1_700_000_000_000
            assert settings.mcp_transport == "stdio"

    def test_invalid_transport(self):
        """Test an unknown transport is rejected."""
        with patch.dict(os.environ, {"MCP_TRANSPORT": "carrier-pigeon"}, clear=True):
            with pytest.raises(PydanticValidationError):
                Settings(_env_file=None)


class TestNetworkConfig:
    """Test NetworkConfig defaults and validation."""

    def test_defaults(self):
        """Test the calibrated defaults."""
        config = NetworkConfig()
        assert config.peer_count == 4
        assert config.osn_count == 3
        assert config.batch_size == 10
        assert config.batch_timeout_ms == 20.0
        assert config.client_timeout_ms == 2000.0
        assert config.sign_endorsements is True

    def test_endorsement_service_grows_with_peers(self):
        """Test per-proposal service time includes a per-peer overhead."""
        assert NetworkConfig(peer_count=4).endorsement_service_ms == pytest.approx(2.0)
        assert NetworkConfig(peer_count=32).endorsement_service_ms == pytest.approx(7.6)

    def test_quorum_cannot_exceed_peers(self):
        """Test the endorsement quorum is bounded by the peer count."""
        with pytest.raises(PydanticValidationError):
            NetworkConfig(peer_count=2, endorsement_quorum=3)

    def test_unknown_field_rejected(self):
        """Test typos in configuration are not silently ignored."""
        with pytest.raises(PydanticValidationError):
            NetworkConfig(peer_cnt=4)


class TestLoadNetworkConfig:
    """Test KEY=value network files."""

    def test_load(self, tmp_path):
        """Test keys are case-insensitive and values coerced."""
        path = tmp_path / "network.env"
        path.write_text("PEER_COUNT=8\nBATCH_TIMEOUT_MS=5\nSIGN_ENDORSEMENTS=false\n")
        config = load_network_config(path)
        assert config.peer_count == 8
        assert config.batch_timeout_ms == 5.0
        assert config.sign_endorsements is False

    def test_missing_file(self, tmp_path):
        """Test a missing file raises ConfigurationError."""
        with pytest.raises(ConfigurationError):
            load_network_config(tmp_path / "absent.env")

    def test_invalid_value(self, tmp_path):
        """Test invalid values raise ConfigurationError naming the file."""
        path = tmp_path / "network.env"
        path.write_text("PEER_COUNT=0\n")
        with pytest.raises(ConfigurationError) as exc_info:
            load_network_config(path)
        assert exc_info.value.data == {"config_file": str(path)}
