"""Tests for error codes and error response formatting."""

import json

import pytest

from consent_ledger.core.errors import (
    ChainIntegrityError, ConsentError, ConsentErrorCodes, ContractRejectedError,
    InfeasibleWorkloadError, RecordNotFoundError, ValidationError, create_error, create_success
)


class TestConsentErrorCodes:
    """Test error code constants."""

    def test_jsonrpc_codes(self):
        """Test the JSON-RPC 2.0 standard codes."""
        assert ConsentErrorCodes.PARSE_ERROR == -32700
        assert ConsentErrorCodes.INVALID_REQUEST == -32600
        assert ConsentErrorCodes.METHOD_NOT_FOUND == -32601
        assert ConsentErrorCodes.INVALID_PARAMS == -32602
        assert ConsentErrorCodes.INTERNAL_ERROR == -32603

    def test_application_codes_are_distinct(self):
        """Test application codes do not collide."""
        codes = [
            value for name, value in vars(ConsentErrorCodes).items()
            if name.isupper() and value < -40000
        ]
        assert len(codes) == len(set(codes))


class TestErrorFormatting:
    """Test error and success response formatting."""

    def test_create_error_basic(self):
        """Test an error without data omits the data member."""
        data = json.loads(create_error(ConsentErrorCodes.RECORD_NOT_FOUND, "Record not found"))
        assert data["error"]["code"] == -41201
        assert data["error"]["message"] == "Record not found"
        assert "data" not in data["error"]

    def test_create_error_with_data(self):
        """Test additional error data is carried through."""
        data = json.loads(create_error(
            ConsentErrorCodes.VALIDATION_ERROR, "Validation failed", data={"field": "op"}
        ))
        assert data["error"]["data"] == {"field": "op"}

    def test_create_success(self):
        """Test success payloads are plain JSON."""
        assert json.loads(create_success({"accepted": True})) == {"accepted": True}


class TestConsentExceptions:
    """Test the exception family."""

    def test_record_not_found(self):
        """Test RecordNotFoundError carries the key."""
        error = RecordNotFoundError("3A~aa~bb~cc")
        assert isinstance(error, ConsentError)
        assert error.code == ConsentErrorCodes.RECORD_NOT_FOUND
        assert error.data == {"key": "3A~aa~bb~cc"}

    def test_contract_rejected_keeps_reason_and_event(self):
        """Test ContractRejectedError exposes its reason code and audit event."""
        error = ContractRejectedError("scope_miss", event={"what": "read"})
        assert error.reason == "scope_miss"
        assert error.event == {"what": "read"}
        assert json.loads(error.to_json())["error"]["data"]["reason"] == "scope_miss"

    def test_chain_integrity_error(self):
        """Test ChainIntegrityError names channel and height."""
        error = ChainIntegrityError("log_channel", 4, "prev_hash does not match tip")
        assert "height 4" in error.message
        assert error.data == {"channel": "log_channel", "height": 4}

    def test_infeasible_workload_details(self):
        """Test details become error data, and no details means no data."""
        assert InfeasibleWorkloadError("no arrivals", offered_load=0).data == {"offered_load": 0}
        assert InfeasibleWorkloadError("no arrivals").data is None

    def test_validation_error_json(self):
        """Test to_json round-trips through the error formatter."""
        error = ValidationError("dataset", "2 datasets match")
        data = json.loads(error.to_json())
        assert data["error"]["code"] == ConsentErrorCodes.VALIDATION_ERROR
        assert data["error"]["data"]["field"] == "dataset"

    def test_errors_are_raisable(self):
        """Test errors behave as ordinary exceptions."""
        with pytest.raises(ConsentError, match="not found"):
            raise RecordNotFoundError("missing")
