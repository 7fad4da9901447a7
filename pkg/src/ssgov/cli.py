"""govctl: reference client and administration tool.

A thin client: every legal decision it prints comes verbatim from a signed
server response (replayable through the offline verifier); the client never
computes decisions itself. Administration subcommands (key generation, frame
and registry installation) operate on the server's directories out-of-band.

Exit codes: 0 transport and legal success; 2 legal deny; 1 transport,
protocol or verification failure; 64 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import urllib.error
import urllib.request
from datetime import datetime, timezone
from pathlib import Path

from . import attest
from .canonical import canonical_bytes, parse_rfc3339, to_rfc3339
from .errors import SsgovError
from .frames import frame_from_dict, validate_frame
from .service import COMMAND_PATH, DECIDE_PATH, GAZETTE_PATH
from .store import RegistrySchema, RegistryStore

EXIT_OK = 0
EXIT_TRANSPORT = 1
EXIT_DENY = 2
EXIT_USAGE = 64

DEFAULT_KEY_VALID_FROM = "2020-01-01T00:00:00Z"
DEFAULT_KEY_VALID_TO = "2099-01-01T00:00:00Z"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"govctl: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config(args) -> dict:
    """Client config: flags override file values override environment."""
    conf = {
        "server": os.environ.get("SSGOV_SERVER", "http://127.0.0.1:8420"),
        "identity_key": os.environ.get("SSGOV_IDENTITY_KEY"),
        "output": os.environ.get("SSGOV_OUTPUT", "human"),
        "keys_dir": os.environ.get("SSGOV_KEYS_DIR"),
    }
    if getattr(args, "config", None):
        conf.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for name in ("server", "identity_key", "output", "keys_dir"):
        value = getattr(args, name.replace("-", "_"), None)
        if value:
            conf[name] = value
    return conf


def _post(server: str, path: str, envelope: dict) -> tuple[int, bytes]:
    request = urllib.request.Request(
        server.rstrip("/") + path, data=canonical_bytes(envelope),
        headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=30) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def _get(server: str, path: str) -> tuple[int, bytes]:
    try:
        with urllib.request.urlopen(server.rstrip("/") + path, timeout=30) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def _now() -> datetime:
    return datetime.now(tz=timezone.utc)


def _print_decision(doc: dict) -> None:
    decision = doc.get("decision") or {}
    verdict = "PERMIT" if decision.get("permit") else "DENY"
    print(f"{verdict}  frame={decision.get('frame_id')}@{decision.get('frame_version')}"
          f"  digest={str(decision.get('frame_digest'))[:12]}")
    missing = decision.get("missing_atoms") or []
    if missing:
        print("missing_atoms:")
        for item in missing:
            print(f"  - {item.get('name')}")
    # The full trace travels with every decision: disputes replay these lines.
    for fired in decision.get("fired_rules") or []:
        print(f"  [{fired['stage']:>7}] {fired['rule_id']}: {fired['result']}")


def _emit_response(conf: dict, raw: bytes) -> tuple[dict, int]:
    """Print a command/decide response and derive the exit code."""
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        print("malformed response body", file=sys.stderr)
        return {}, EXIT_TRANSPORT
    if conf["output"] == "canonical-json":
        sys.stdout.buffer.write(raw)
        sys.stdout.buffer.flush()
    code = doc.get("code")
    if code != "OK":
        if conf["output"] != "canonical-json":
            print(f"error: {code}: {doc.get('error')}", file=sys.stderr)
        return doc, EXIT_TRANSPORT
    permit = bool((doc.get("decision") or {}).get("permit"))
    if conf["output"] != "canonical-json":
        _print_decision(doc)
        if doc.get("rows") is not None:
            print(f"rows: {json.dumps(doc['rows'], sort_keys=True)}")
        if doc.get("event_seq") is not None:
            print(f"event_seq: {doc['event_seq']}")
        if doc.get("receipt"):
            print(f"receipt: {doc['receipt']['receipt_id']}")
    return doc, EXIT_OK if permit else EXIT_DENY


# --- subcommands ---------------------------------------------------------------

def cmd_keygen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    private = attest.generate_private_key()
    key_id = attest.key_id_for(private.public_key())
    (out / f"{key_id}.key").write_bytes(attest.private_key_to_pem(private))
    (out / f"{key_id}.pub.pem").write_bytes(attest.public_key_to_pem(private.public_key()))
    if args.register:
        keystore = attest.KeyStore(args.register)
        keystore.register(args.owner, private.public_key(),
                          parse_rfc3339(args.valid_from), parse_rfc3339(args.valid_to))
    print(key_id)
    return EXIT_OK


def cmd_load_frame(args) -> int:
    try:
        doc = json.loads(Path(args.frame).read_text(encoding="utf-8"))
        frame = frame_from_dict(doc)
        schemas = None
        if args.data_dir:
            store = RegistryStore(Path(args.data_dir) / "events.ndjson")
            view = store.view()
            schemas = {rid: view.schema(rid) for rid in view.registries()} or None
        validate_frame(frame, schemas)
    except SsgovError as exc:
        print(f"invalid frame: {exc.detail}", file=sys.stderr)
        return EXIT_TRANSPORT
    target = Path(args.frame_dir)
    target.mkdir(parents=True, exist_ok=True)
    path = target / f"{frame.frame_id}@{frame.version}.json"
    path.write_bytes(frame.canonical() + b"\n")
    print(f"{path} {frame.digest()}")
    return EXIT_OK


def cmd_define_registry(args) -> int:
    """Offline administration: appends a define event to the server's log.

    Run only while the service is stopped; the store is single-writer.
    """
    doc = json.loads(Path(args.schema).read_text(encoding="utf-8"))
    store = RegistryStore(Path(args.data_dir) / "events.ndjson")
    try:
        event = store.define_registry(RegistrySchema.from_dict(doc),
                                      requester=args.requester,
                                      at=parse_rfc3339(args.at) if args.at else _now())
    except SsgovError as exc:
        print(f"{exc.code}: {exc.detail}", file=sys.stderr)
        return EXIT_TRANSPORT
    print(f"defined {event.registry_id} at seq {event.seq}")
    return EXIT_OK


def _identity_key(conf: dict):
    path = conf.get("identity_key")
    if not path:
        print("no identity key configured (--identity-key or SSGOV_IDENTITY_KEY)",
              file=sys.stderr)
        return None
    return attest.load_private_key(path)


def cmd_submit(args) -> int:
    conf = _config(args)
    if args.envelope:
        envelope = json.loads(Path(args.envelope).read_text(encoding="utf-8"))
        path = envelope.get("endpoint", COMMAND_PATH)
    else:
        if args.command_file:
            command_text = Path(args.command_file).read_text(encoding="utf-8").strip()
        elif args.command:
            command_text = args.command
        else:
            print("submit needs --command, --command-file or --envelope", file=sys.stderr)
            return EXIT_USAGE
        if not args.requester:
            print("submit needs --requester when building an envelope", file=sys.stderr)
            return EXIT_USAGE
        key = _identity_key(conf)
        if key is None:
            return EXIT_TRANSPORT
        path = COMMAND_PATH
        envelope = attest.build_envelope(
            path, command_text, args.requester, key,
            parse_rfc3339(args.at) if args.at else _now(), nonce=args.nonce)
    try:
        status, raw = _post(conf["server"], path, envelope)
    except urllib.error.URLError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    if status != 200:
        sys.stdout.buffer.write(raw)
        return EXIT_TRANSPORT
    _, exit_code = _emit_response(conf, raw)
    return exit_code


def cmd_decide(args) -> int:
    conf = _config(args)
    key = _identity_key(conf)
    if key is None:
        return EXIT_TRANSPORT
    params = {}
    for item in args.param or []:
        name, _, value = item.partition("=")
        params[name] = value
    if args.companion and args.companion != "none":
        params["companion"] = args.companion
    payload = {"subject": args.subject, "request_kind": args.request, "params": params}
    if args.at:
        payload["at"] = to_rfc3339(parse_rfc3339(args.at))
    if args.tags:
        payload["jurisdiction_tags"] = sorted(args.tags.split(","))
    envelope = attest.build_envelope(
        DECIDE_PATH, canonical_bytes(payload).decode("utf-8"), args.requester or args.subject,
        key, parse_rfc3339(args.at) if args.at else _now(), nonce=args.nonce)
    try:
        status, raw = _post(conf["server"], DECIDE_PATH, envelope)
    except urllib.error.URLError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    if status != 200:
        sys.stdout.buffer.write(raw)
        return EXIT_TRANSPORT
    _, exit_code = _emit_response(conf, raw)
    return exit_code


def cmd_receipt_verify(args) -> int:
    receipt = json.loads(Path(args.receipt).read_text(encoding="utf-8"))
    keys = attest.KeyStore(args.keys)
    envelope = (json.loads(Path(args.request).read_text(encoding="utf-8"))
                if args.request else None)
    decision_doc = (json.loads(Path(args.decision).read_text(encoding="utf-8"))
                    if args.decision else None)
    problems = attest.verify_receipt(receipt, keys, envelope, decision_doc)
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return EXIT_TRANSPORT
    print("receipt verified")
    return EXIT_OK


def cmd_gazette(args) -> int:
    conf = _config(args)
    try:
        status, raw = _get(conf["server"], GAZETTE_PATH)
    except urllib.error.URLError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    if status != 200:
        sys.stdout.buffer.write(raw)
        return EXIT_TRANSPORT
    if conf["output"] == "canonical-json":
        sys.stdout.buffer.write(raw)
        return EXIT_OK
    doc = json.loads(raw.decode("utf-8"))
    print(f"gazette digest {doc.get('digest')}")
    for entry in doc.get("entries", []):
        print(f"  {entry['name']:<16} {entry['path']:<22} "
              f"schema={entry['schema_version']} effective={entry['effective']}")
    return EXIT_OK


def cmd_watch(args) -> int:
    """Client-side decision watch: poll decide and report permit flips."""
    conf = _config(args)
    key = _identity_key(conf)
    if key is None:
        return EXIT_TRANSPORT
    last_permit = None
    cycles = 0
    while args.cycles == 0 or cycles < args.cycles:
        cycles += 1
        params = {}
        for item in args.param or []:
            name, _, value = item.partition("=")
            params[name] = value
        payload = {"subject": args.subject, "request_kind": args.request, "params": params}
        if args.tags:
            payload["jurisdiction_tags"] = sorted(args.tags.split(","))
        envelope = attest.build_envelope(
            DECIDE_PATH, canonical_bytes(payload).decode("utf-8"),
            args.requester or args.subject, key, _now())
        try:
            status, raw = _post(conf["server"], DECIDE_PATH, envelope)
        except urllib.error.URLError as exc:
            print(f"transport error: {exc}", file=sys.stderr)
            return EXIT_TRANSPORT
        if status == 200:
            doc = json.loads(raw.decode("utf-8"))
            if doc.get("code") == "OK":
                permit = bool((doc.get("decision") or {}).get("permit"))
                if last_permit is None:
                    print(f"baseline: {'permit' if permit else 'deny'}")
                elif permit != last_permit:
                    print("permission granted" if permit else "permission cancelled")
                last_permit = permit
            else:
                print(f"error: {doc.get('code')}", file=sys.stderr)
        if args.cycles == 0 or cycles < args.cycles:
            time.sleep(args.interval)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="govctl", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="client config JSON path")
    parser.add_argument("--server", help="server base URL")
    parser.add_argument("--identity-key", help="private key PEM for signing requests")
    parser.add_argument("--keys-dir", help="public keystore directory")
    parser.add_argument("--output", choices=("human", "canonical-json"),
                        help="output mode")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("keygen", help="generate an Ed25519 identity key")
    p.add_argument("--owner", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--register", help="keystore directory to register the public key in")
    p.add_argument("--valid-from", default=DEFAULT_KEY_VALID_FROM)
    p.add_argument("--valid-to", default=DEFAULT_KEY_VALID_TO)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("load-frame", help="validate and install a frame document")
    p.add_argument("frame")
    p.add_argument("--frame-dir", required=True)
    p.add_argument("--data-dir", help="cross-check field references against the store")
    p.set_defaults(func=cmd_load_frame)

    p = sub.add_parser("define-registry",
                       help="append a define event (server must be stopped)")
    p.add_argument("schema")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--requester", required=True)
    p.add_argument("--at")
    p.set_defaults(func=cmd_define_registry)

    p = sub.add_parser("submit", help="sign and submit a command envelope")
    p.add_argument("--command")
    p.add_argument("--command-file")
    p.add_argument("--envelope", help="send a prepared signed envelope verbatim")
    p.add_argument("--requester")
    p.add_argument("--at")
    p.add_argument("--nonce")
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("decide", help="ask for a decision without executing")
    p.add_argument("--subject", required=True)
    p.add_argument("--request", required=True)
    p.add_argument("--requester")
    p.add_argument("--at")
    p.add_argument("--tags")
    p.add_argument("--companion")
    p.add_argument("--param", action="append")
    p.add_argument("--nonce")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("receipt-verify", help="verify a receipt offline")
    p.add_argument("receipt")
    p.add_argument("--keys", required=True)
    p.add_argument("--request")
    p.add_argument("--decision")
    p.set_defaults(func=cmd_receipt_verify)

    p = sub.add_parser("gazette", help="fetch the signed gazette")
    p.set_defaults(func=cmd_gazette)

    p = sub.add_parser("watch", help="poll a decision and report changes")
    p.add_argument("--subject", required=True)
    p.add_argument("--request", required=True)
    p.add_argument("--requester")
    p.add_argument("--tags")
    p.add_argument("--param", action="append")
    p.add_argument("--interval", type=float, default=60.0)
    p.add_argument("--cycles", type=int, default=0, help="0 = poll forever")
    p.set_defaults(func=cmd_watch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except SsgovError as exc:
        print(f"{exc.code}: {exc.detail}", file=sys.stderr)
        return EXIT_TRANSPORT
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    raise SystemExit(main())
