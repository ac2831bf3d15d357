"""Contracts deployed on the two channels."""

from consent_ledger.contracts.log import LogContract
from consent_ledger.contracts.runtime import Contract, ContractRegistry, ContractStub, contract_function
from consent_ledger.contracts.three_a import ThreeAContract


def build_registry(token_lifetime_s: int = 3600) -> ContractRegistry:
    """Registry with both platform contracts deployed."""
    return ContractRegistry([ThreeAContract(), LogContract(token_lifetime_s=token_lifetime_s)])


__all__ = [
    "Contract", "ContractRegistry", "ContractStub", "contract_function",
    "LogContract", "ThreeAContract", "build_registry",
]
