"""Tests for composite identities, role views and key fixtures."""

import pytest
from pydantic import ValidationError as PydanticValidationError

from consent_ledger.core.crypto import generate_keypair
from consent_ledger.models.identity import (
    ComplexIdentity, KeyFixture, KeyPurpose, Role, project_view
)
from consent_ledger.models.records import DatasetRef, three_a_key


@pytest.fixture
def identity():
    return ComplexIdentity(
        ds=generate_keypair(),
        dc=generate_keypair(),
        enc=generate_keypair(KeyPurpose.ENC),
    )


class TestComplexIdentity:
    """Test the six-element composite identity."""

    def test_complete_form(self, identity):
        """Test the complete form lists pk/sk pairs for DS, DC and the pointer key."""
        form = identity.complete_form()
        assert len(form) == 6
        assert form[0] == identity.ds.public_hex
        assert form[5] == identity.enc.private_hex

    def test_dataset_key(self, identity):
        """Test the dataset key is the 3A composite of the three public keys."""
        assert identity.dataset_key == three_a_key(
            identity.ds.public_hex, identity.dc.public_hex, identity.enc.public_hex
        )

    def test_external_form_has_no_private_keys(self, identity):
        """Test the external form drops every private key."""
        external = identity.external()
        assert not any(kp.has_private for kp in (external.ds, external.dc, external.enc))


class TestRoleViews:
    """Test projections of a composite identity per role."""

    def test_external_view(self, identity):
        """Test outsiders see the three public keys only."""
        view = project_view(identity, Role.EXTERNAL)
        assert [name for name, _ in view.keys] == ["pk_ds", "pk_dc", "pk_enc"]
        assert view.private_elements() == ()

    def test_ds_view(self, identity):
        """Test the DS sees its own signing key and sk_enc, never sk_dc."""
        view = project_view(identity, Role.DS)
        assert view.private_elements() == ("sk_ds", "sk_enc")
        assert view.get("sk_dc") is None
        assert view.get("sk_ds") == identity.ds.private_hex

    def test_dc_view(self, identity):
        """Test the DC sees its own signing key and sk_enc, never sk_ds."""
        view = project_view(identity, Role.DC)
        assert view.private_elements() == ("sk_dc", "sk_enc")
        assert view.get("sk_ds") is None

    def test_dp_view(self, identity):
        """Test a DP holds sk_enc and no signing key of the dataset."""
        view = project_view(identity, Role.DP)
        assert view.private_elements() == ("sk_enc",)
        assert view.to_dict()["role"] == "dp"

    def test_missing_private_key_is_left_out(self, identity):
        """Test a view built from public-only material omits private elements."""
        view = project_view(identity.external(), Role.DS)
        assert view.private_elements() == ()
        assert view.get("pk_ds") == identity.ds.public_hex


class TestKeyFixture:
    """Test the on-disk key fixture model."""

    def test_from_keypair(self):
        """Test a fixture carries both halves and converts back."""
        keypair = generate_keypair(KeyPurpose.ENC)
        fixture = KeyFixture.from_keypair(keypair, "enc")
        assert fixture.purpose is KeyPurpose.ENC
        assert fixture.to_keypair() == keypair

    def test_public_only(self):
        """Test include_private=False writes no private key."""
        fixture = KeyFixture.from_keypair(generate_keypair(), "dp", include_private=False)
        assert fixture.private_key is None
        assert not fixture.to_keypair().has_private

    def test_normalises_case(self):
        """Test uppercase hex is accepted and lowered."""
        keypair = generate_keypair()
        fixture = KeyFixture(public_key=keypair.public_hex.upper(), role="dp")
        assert fixture.public_key == keypair.public_hex

    @pytest.mark.parametrize("value", ["abcd", "zz" * 32, "00" * 33])
    def test_rejects_malformed(self, value):
        """Test keys must be 64 hex characters."""
        with pytest.raises(PydanticValidationError):
            KeyFixture(public_key=value, role="dp")


class TestDatasetRef:
    """Test dataset references and composite keys."""

    def test_key_round_trip(self, identity):
        """Test a dataset key parses back into its references."""
        ref = DatasetRef(pk_ds=identity.ds.public_hex, pk_dc=identity.dc.public_hex,
                         pk_enc=identity.enc.public_hex)
        assert DatasetRef.from_key(ref.key) == ref

    def test_rejects_non_hex_component(self):
        """Test composite key components must be lowercase hex."""
        ref = DatasetRef(pk_ds="ab", pk_dc="cd~ef", pk_enc="01")
        with pytest.raises(ValueError):
            ref.key
