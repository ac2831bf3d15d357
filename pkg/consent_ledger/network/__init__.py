"""Discrete-event simulation of the peer and ordering network."""

from consent_ledger.network.simulator import Network, ScriptedTx, SimClock, TxHandle, run_until_quiescent

__all__ = ["Network", "ScriptedTx", "SimClock", "TxHandle", "run_until_quiescent"]
