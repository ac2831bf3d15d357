"""Audit trail read from the log channel's chain."""

import json
import logging
from typing import Iterator, List, Optional

from consent_ledger.ledger.chain import Ledger
from consent_ledger.models.ledger import Transaction, TxStatus
from consent_ledger.models.records import LOG_CHANNEL, AuditEntry

logger = logging.getLogger(__name__)


def entry_from_tx(tx: Transaction, height: int) -> AuditEntry:
    """Build the who/what/when/which/verdict record of one log transaction."""
    try:
        body = json.loads(tx.response) if tx.response else {}
    except ValueError:
        body = {}
    event = body.get("event") if isinstance(body, dict) else None

    if not event:
        # Network-level rejections (mvcc_conflict, duplicate_tx) carry no contract event.
        return AuditEntry(
            who=tx.submitter,
            what=tx.function,
            when=tx.submitted_at,
            which="",
            verdict="accepted" if tx.status is TxStatus.SUCCESS else "rejected",
            reason=body.get("reason") if isinstance(body, dict) else None,
            tx_id=tx.tx_id,
            height=height,
        )

    verdict = event.get("verdict", "rejected")
    if tx.status is not TxStatus.SUCCESS:
        verdict = "rejected"
    return AuditEntry(
        who=event.get("who") or tx.submitter,
        what=event.get("what") or tx.function,
        when=tx.submitted_at,
        which=event.get("which") or "",
        verdict=verdict,
        scope=list(event.get("scope") or []),
        reason=event.get("reason") or body.get("reason"),
        owner=event.get("owner"),
        controller=event.get("controller"),
        processor=event.get("processor"),
        tx_id=tx.tx_id,
        height=height,
    )


def audit_entries(ledger: Ledger) -> Iterator[AuditEntry]:
    """Every log-channel transaction in chain order."""
    for block in ledger.channel(LOG_CHANNEL).blocks:
        for tx in block.txs:
            yield entry_from_tx(tx, block.height)


def audit_query(
    ledger: Ledger,
    owner: Optional[str] = None,
    controller: Optional[str] = None,
    processor: Optional[str] = None,
    actor: Optional[str] = None,
    party: Optional[str] = None,
    dataset_key: Optional[str] = None,
    since: Optional[int] = None,
    until: Optional[int] = None,
) -> List[AuditEntry]:
    """Filter the audit trail; every given criterion must match.

    ``party`` matches an entry that names the key in any role. ``since`` and
    ``until`` bound ``when`` inclusively, in ms since epoch.
    """
    results = []
    for entry in audit_entries(ledger):
        if owner is not None and entry.owner != owner:
            continue
        if controller is not None and entry.controller != controller:
            continue
        if processor is not None and entry.processor != processor:
            continue
        if actor is not None and entry.who != actor:
            continue
        if party is not None and party not in (entry.who, entry.owner, entry.controller, entry.processor):
            continue
        if dataset_key is not None and entry.which != dataset_key:
            continue
        if since is not None and entry.when < since:
            continue
        if until is not None and entry.when > until:
            continue
        results.append(entry)
    return results


def export_ndjson(entries: List[AuditEntry]) -> str:
    """One who/what/when/which/verdict/why line per entry."""
    return "".join(entry.export_line() + "\n" for entry in entries)
