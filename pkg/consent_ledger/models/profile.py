"""Profile documents held by the resource server and its request/response shapes."""

import json
from enum import Enum
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field, computed_field
from sqlmodel import Field as SQLField, SQLModel

from consent_ledger.core.encoding import canonical_json, sha256_hex

CONTENT_TYPE = "application/json"
REQUIRED_PARAMS = ("pubkey", "signature", "token", "operation")


class ProfileDocument(BaseModel):
    """A FOAF-style person profile addressed by its data pointer."""

    profile_id: str = Field(..., min_length=1)
    attributes: Dict[str, Any] = Field(default_factory=dict)
    version: int = Field(default=1, ge=1)

    @computed_field
    @property
    def content_hash(self) -> str:
        return sha256_hex(canonical_json({"attributes": self.attributes, "version": self.version}))


class ProfileRow(SQLModel, table=True):
    """Stored form of a profile document."""

    __tablename__ = "profiles"

    profile_id: str = SQLField(primary_key=True, max_length=255)
    dataset_key: str = SQLField(index=True)
    attributes_json: str
    version: int = SQLField(default=1)
    content_hash: str = SQLField(max_length=64)

    def to_document(self) -> ProfileDocument:
        return ProfileDocument(
            profile_id=self.profile_id,
            attributes=json.loads(self.attributes_json),
            version=self.version,
        )

    @classmethod
    def from_document(cls, document: ProfileDocument, dataset_key: str) -> "ProfileRow":
        return cls(
            profile_id=document.profile_id,
            dataset_key=dataset_key,
            attributes_json=canonical_json(document.attributes),
            version=document.version,
            content_hash=document.content_hash,
        )


class ApiRequest(BaseModel):
    """The six-part call a client sends to the profile management API."""

    api_endpoint: str
    rest_endpoint: str = "localhost:8080"
    method: str = "POST"
    header: Dict[str, str] = Field(default_factory=lambda: {"Content-Type": CONTENT_TYPE})
    params: Dict[str, str] = Field(default_factory=dict)
    payload: Optional[Dict[str, Any]] = None

    @property
    def profile_id(self) -> str:
        return self.api_endpoint.rstrip("/").rsplit("/", 1)[-1]

    def missing_params(self) -> list:
        return [name for name in REQUIRED_PARAMS if not self.params.get(name)]


class ApiStatus(str, Enum):
    OK = "ok"
    DENIED = "denied"
    ERROR = "error"

    def __str__(self):
        return self.value


class ApiResponse(BaseModel):
    """Result of one API call; ``audit_ref`` is the validation transaction id."""

    status: ApiStatus
    body: Any = None
    audit_ref: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status is ApiStatus.OK

    @property
    def http_status(self) -> int:
        if self.status is ApiStatus.OK:
            return 200
        if self.status is ApiStatus.DENIED:
            return 403
        reason = self.body.get("reason") if isinstance(self.body, dict) else None
        return {"not_found": 404, "bad_request": 400, "conflict": 409}.get(reason, 500)

    @classmethod
    def denied(cls, reason: str, audit_ref: Optional[str] = None) -> "ApiResponse":
        return cls(status=ApiStatus.DENIED, body={"reason": reason}, audit_ref=audit_ref)

    @classmethod
    def error(cls, reason: str, audit_ref: Optional[str] = None, **detail: Any) -> "ApiResponse":
        return cls(status=ApiStatus.ERROR, body={"reason": reason, **detail}, audit_ref=audit_ref)
