"""Operator command line for the consent ledger.

Every command is a thin binding to one workflow; ``--json`` switches the
output to a single machine-readable JSON document. Exit codes:

    0  success
    2  malformed flags
    3  missing or invalid key fixture
    4  chain unreachable
    5  request denied or rejected
    6  operation error (unknown record, already registered, bad input)
    7  chain verification found corruption
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from consent_ledger import __version__
from consent_ledger.core.config import NetworkConfig, load_network_config, settings
from consent_ledger.core.errors import (
    ChainIntegrityError, ChainUnavailableError, ConsentError, ContractRejectedError, MalformedKeyError
)
from consent_ledger.core.log_config import setup_logging
from consent_ledger.models.bench import WorkloadSpec
from consent_ledger.models.network import TxKind
from consent_ledger.models.records import CHANNELS, Operation
from consent_ledger.services import fixtures
from consent_ledger.services.bench import run_benchmark, sweep
from consent_ledger.services.demo import run_demo
from consent_ledger.services.workflows import Deployment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_KEY = 3
EXIT_UNAVAILABLE = 4
EXIT_DENIED = 5
EXIT_ERROR = 6
EXIT_CORRUPT = 7

OPERATIONS = [op.value for op in Operation]


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consent-ledger",
        description="Consent management over a 3A ledger and a log ledger.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--data-dir", type=Path, default=None, help="chain, keyring and document store directory")
    parser.add_argument("--network-config", type=Path, default=None, help="KEY=value network configuration file")
    parser.add_argument("--seed", type=int, default=None, help="network simulator seed")
    parser.add_argument("--token-lifetime", type=int, default=None, help="access token lifetime in seconds")
    parser.add_argument("--log-level", default=None, help="override the configured log level")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("keygen", help="create a key fixture pair (<name>.key, <name>.pub)")
    p.add_argument("--role", choices=["ds", "dc", "dp", "rs", "enc"], required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--out", type=Path, default=None, help="output directory (default: <data-dir>/keys)")

    p = sub.add_parser("register", help="register a dataset for a DS and DC")
    p.add_argument("--ds", type=Path, required=True)
    p.add_argument("--dc", type=Path, required=True)
    p.add_argument("--dc-ops", default=None, help="comma-separated DC operations (default: all)")
    p.add_argument("--enc", type=Path, default=None, help="data-pointer key fixture (default: generate)")

    p = sub.add_parser("upload", help="store a profile and record its pointer and hash")
    p.add_argument("--uploader", type=Path, required=True, help="DS or DC key")
    p.add_argument("--profile-id", required=True)
    p.add_argument("--profile", type=Path, required=True, help="JSON file of profile attributes")
    p.add_argument("--dataset", default=None)

    p = sub.add_parser("grant", help="grant an operation to a DP")
    p.add_argument("--ds", type=Path, required=True)
    p.add_argument("--dc", type=Path, required=True)
    p.add_argument("--dp", type=Path, required=True, help="DP key, or .pub with the .key beside it")
    p.add_argument("--op", choices=OPERATIONS, required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--dp-signature", default=None, help="detached DP signature over the grant request")
    p.add_argument("--nonce", default=None, help="nonce covered by --dp-signature")

    p = sub.add_parser("revoke", help="revoke an operation from a DP")
    p.add_argument("--signer", type=Path, required=True, help="DS or DC key")
    p.add_argument("--dp", type=Path, required=True)
    p.add_argument("--op", choices=OPERATIONS, required=True)
    p.add_argument("--dataset", default=None)

    p = sub.add_parser("access", help="request access and call the resource server")
    p.add_argument("--dp", type=Path, required=True)
    p.add_argument("--op", choices=OPERATIONS, required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--payload", type=Path, default=None, help="JSON attributes for update")

    p = sub.add_parser("validate", help="validate an access token")
    p.add_argument("--holder", type=Path, required=True)
    p.add_argument("--token", required=True)
    p.add_argument("--op", choices=OPERATIONS, required=True)

    p = sub.add_parser("refresh", help="re-issue the holder's access token")
    p.add_argument("--holder", type=Path, required=True)
    p.add_argument("--dataset", default=None)

    p = sub.add_parser("audit", help="query the audit trail")
    p.add_argument("--owner", default=None)
    p.add_argument("--controller", default=None)
    p.add_argument("--processor", default=None)
    p.add_argument("--party", default=None, help="key in any role")
    p.add_argument("--dataset", dest="dataset_key", default=None)
    p.add_argument("--since", type=int, default=None, help="ms since epoch, inclusive")
    p.add_argument("--until", type=int, default=None, help="ms since epoch, inclusive")

    p = sub.add_parser("verify-chain", help="recompute every block hash and link")
    p.add_argument("--channel", choices=list(CHANNELS), default=None)

    p = sub.add_parser("bench", help="run a benchmark sweep on the simulated network")
    p.add_argument("--kind", choices=[k.value for k in TxKind], default=TxKind.READ.value)
    axis = p.add_mutually_exclusive_group()
    axis.add_argument("--loads", type=_float_list, default=None, help="offered loads (tx/s) to sweep")
    axis.add_argument("--peers", type=_float_list, default=None, help="peer counts to sweep")
    p.add_argument("--load", type=float, default=100.0, help="offered load for a peer sweep")
    p.add_argument("--duration", type=float, default=4.0, help="arrival window in simulated seconds")
    p.add_argument("--clients", type=int, default=None, help="in-flight transaction cap")
    p.add_argument("--datasets", type=int, default=512, help="datasets registered before measuring")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep processes")
    p.add_argument("--csv", type=Path, default=None, help="write the sweep table here")
    p.add_argument("--plot", type=Path, default=None, help="write plot series (JSON) here")

    p = sub.add_parser("erase", help="erase a profile and destroy its data-pointer keys")
    p.add_argument("--ds", type=Path, required=True)
    p.add_argument("--profile-id", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--holder", type=Path, action="append", default=[], help="other key holders")

    sub.add_parser("demo", help="play the scripted consent and access scenario")

    p = sub.add_parser("serve", help="run the MCP server with the profile management API")
    p.add_argument("--transport", choices=["stdio", "sse", "http"], default=None)
    return parser


# -- helpers -------------------------------------------------------------------

def _network_config(args: argparse.Namespace) -> NetworkConfig:
    path = args.network_config or settings.network_config_path
    config = load_network_config(path) if path else NetworkConfig(seed=settings.seed)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    return config


def _deployment(args: argparse.Namespace) -> Deployment:
    return Deployment(
        data_dir=args.data_dir or settings.data_dir,
        config=_network_config(args),
        token_lifetime_s=args.token_lifetime,
    )


def _read_json(path: Optional[Path]) -> Optional[Dict[str, Any]]:
    if path is None:
        return None
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path} must hold a JSON object")
    return data


def _emit(args: argparse.Namespace, result: Dict[str, Any], text: Optional[str] = None) -> None:
    if args.json:
        print(json.dumps(result, indent=2, default=str))
        return
    if text is not None:
        print(text, end="" if text.endswith("\n") else "\n")
        return
    for key, value in result.items():
        if value is None:
            continue
        if isinstance(value, (dict, list)):
            value = json.dumps(value, default=str)
        print(f"{key}: {value}")


def _verdict_exit(result: Dict[str, Any]) -> int:
    return EXIT_OK if result.get("accepted", True) else EXIT_DENIED


# -- commands ------------------------------------------------------------------

def cmd_keygen(args: argparse.Namespace) -> int:
    out = args.out or Path(args.data_dir or settings.data_dir) / "keys"
    _emit(args, fixtures.keygen(out, args.name, args.role))
    return EXIT_OK


def cmd_register(args: argparse.Namespace) -> int:
    result = _deployment(args).register(args.ds, args.dc, args.dc_ops, args.enc)
    _emit(args, result)
    return _verdict_exit(result)


def cmd_upload(args: argparse.Namespace) -> int:
    attributes = _read_json(args.profile) or {}
    result = asyncio.run(_deployment(args).upload(args.uploader, args.profile_id, attributes, args.dataset))
    _emit(args, result)
    return _verdict_exit(result)


def cmd_grant(args: argparse.Namespace) -> int:
    result = _deployment(args).grant(
        args.ds, args.dc, args.dp, args.op, args.dataset, dp_signature=args.dp_signature, nonce=args.nonce
    )
    _emit(args, result)
    return _verdict_exit(result)


def cmd_revoke(args: argparse.Namespace) -> int:
    result = _deployment(args).revoke(args.signer, args.dp, args.op, args.dataset)
    _emit(args, result)
    return _verdict_exit(result)


def cmd_access(args: argparse.Namespace) -> int:
    result = asyncio.run(_deployment(args).access(args.dp, args.op, args.dataset, _read_json(args.payload)))
    _emit(args, result)
    return _verdict_exit(result)


def cmd_validate(args: argparse.Namespace) -> int:
    result = _deployment(args).validate(args.holder, args.token, args.op)
    _emit(args, result)
    return _verdict_exit(result)


def cmd_refresh(args: argparse.Namespace) -> int:
    result = _deployment(args).refresh(args.holder, args.dataset)
    _emit(args, result)
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    result = _deployment(args).audit(
        owner=args.owner, controller=args.controller, processor=args.processor, party=args.party,
        dataset_key=args.dataset_key, since=args.since, until=args.until,
    )
    ndjson = result.pop("ndjson")
    _emit(args, result, ndjson or "no audit entries\n")
    return EXIT_OK


def cmd_verify_chain(args: argparse.Namespace) -> int:
    result = _deployment(args).verify_chain(args.channel)
    lines = [
        f"{name}: ok" if v["ok"] else f"{name}: corrupt({v['height']}) {v['detail']}"
        for name, v in result["channels"].items()
    ]
    _emit(args, result, "\n".join(lines))
    return EXIT_OK if result["ok"] else EXIT_CORRUPT


def cmd_bench(args: argparse.Namespace) -> int:
    network = _network_config(args).model_copy(update={"sign_endorsements": False})
    base = WorkloadSpec(
        kind=TxKind(args.kind),
        offered_load=args.loads[0] if args.loads else args.load,
        duration_s=args.duration,
        client_count=args.clients,
        network=network,
        dataset_count=args.datasets,
    )
    if args.peers:
        result = sweep("peer_count", args.peers, base, workers=args.workers)
    else:
        result = sweep("offered_load", args.loads or [args.load], base, workers=args.workers)

    table = result.to_csv()
    if args.csv:
        args.csv.write_text(table, encoding="utf-8")
    if args.plot:
        args.plot.write_text(json.dumps(result.to_plot_data(), indent=2), encoding="utf-8")
    _emit(args, result.model_dump(mode="json"), table)
    return EXIT_OK


def cmd_erase(args: argparse.Namespace) -> int:
    result = asyncio.run(_deployment(args).erase(args.ds, args.profile_id, args.dataset, args.holder))
    _emit(args, result)
    return _verdict_exit(result)


def cmd_demo(args: argparse.Namespace) -> int:
    result = asyncio.run(run_demo(_network_config(args)))
    lines = [
        f"{step['step']}: {'ok' if step['accepted'] else 'denied'}"
        + (f" ({step['reason']})" if step.get("reason") else "")
        for step in result["steps"]
    ]
    lines.append("audit trail:")
    lines += [f"  {e['what']} by {e['who'][:12]} -> {e['verdict']}" for e in result["audit"]]
    _emit(args, result, "\n".join(lines))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from consent_ledger.server import main as serve

    asyncio.run(serve(args.transport))
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "keygen": cmd_keygen,
    "register": cmd_register,
    "upload": cmd_upload,
    "grant": cmd_grant,
    "revoke": cmd_revoke,
    "access": cmd_access,
    "validate": cmd_validate,
    "refresh": cmd_refresh,
    "audit": cmd_audit,
    "verify-chain": cmd_verify_chain,
    "bench": cmd_bench,
    "erase": cmd_erase,
    "demo": cmd_demo,
    "serve": cmd_serve,
}


def _fail(args: argparse.Namespace, code: int, error: Exception) -> int:
    if args.json:
        payload = error.to_json() if isinstance(error, ConsentError) else json.dumps({"error": {"message": str(error)}})
        print(payload)
    else:
        print(f"error: {getattr(error, 'message', error)}", file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "serve":
        setup_logging(level=args.log_level)

    try:
        return COMMANDS[args.command](args)
    except MalformedKeyError as e:
        return _fail(args, EXIT_KEY, e)
    except ChainUnavailableError as e:
        return _fail(args, EXIT_UNAVAILABLE, e)
    except ContractRejectedError as e:
        return _fail(args, EXIT_DENIED, e)
    except ChainIntegrityError as e:
        return _fail(args, EXIT_CORRUPT, e)
    except ConsentError as e:
        return _fail(args, EXIT_ERROR, e)
    except (OSError, ValueError) as e:
        logger.debug("Command %s failed", args.command, exc_info=True)
        return _fail(args, EXIT_ERROR, e)


if __name__ == "__main__":
    sys.exit(main())
