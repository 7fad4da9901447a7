from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from ssgov import attest
from ssgov.canonical import canonical_bytes, parse_rfc3339
from ssgov.server import GovHttpServer
from ssgov.service import GovService, ServiceConfig

KEY_VALID_FROM = parse_rfc3339("2020-01-01T00:00:00Z")
KEY_VALID_TO = parse_rfc3339("2099-01-01T00:00:00Z")


@dataclass
class Harness:
    """A provisioned service deployment rooted in a temp directory."""

    root: Path
    config_path: Path
    service: GovService
    server: GovHttpServer | None = None
    keys: dict[str, object] = field(default_factory=dict)  # owner -> private key
    keystore: attest.KeyStore | None = None

    @property
    def url(self) -> str:
        assert self.server is not None
        return self.server.url

    def key_path(self, owner: str) -> Path:
        return self.root / "client-keys" / f"{owner}.key"

    def stop(self):
        if self.server is not None:
            self.server.shutdown()
            self.server = None


def provision(root: Path, fixture_builder, owners, tags, *, start_http=False,
              fixture_kwargs=None) -> Harness:
    """Build a scenario fixture into a fresh service deployment directory."""
    data_dir = root / "data"
    frame_dir = root / "frames"
    keys_dir = root / "keys"
    client_keys = root / "client-keys"
    for directory in (data_dir, frame_dir, keys_dir, client_keys):
        directory.mkdir(parents=True, exist_ok=True)

    scenario = fixture_builder(log_path=data_dir / "events.ndjson",
                               **(fixture_kwargs or {}))
    for frame in scenario.frames:
        (frame_dir / f"{frame.frame_id}@{frame.version}.json").write_bytes(
            frame.canonical() + b"\n")

    server_key = attest.generate_private_key()
    server_key_path = root / "server.key"
    server_key_path.write_bytes(attest.private_key_to_pem(server_key))

    keystore = attest.KeyStore(keys_dir)
    keystore.register("sovereign", server_key.public_key(), KEY_VALID_FROM, KEY_VALID_TO)
    private_keys = {}
    for owner in owners:
        key = attest.generate_private_key()
        keystore.register(owner, key.public_key(), KEY_VALID_FROM, KEY_VALID_TO)
        (client_keys / f"{owner}.key").write_bytes(attest.private_key_to_pem(key))
        private_keys[owner] = key

    config_path = root / "server.json"
    config_path.write_text(json.dumps({
        "data_dir": str(data_dir),
        "frame_dir": str(frame_dir),
        "keys_dir": str(keys_dir),
        "server_key": str(server_key_path),
        "listen_host": "127.0.0.1",
        "listen_port": 0,
        "default_jurisdiction_tags": sorted(tags),
    }, indent=2), encoding="utf-8")

    service = GovService(ServiceConfig.load(config_path))
    harness = Harness(root=root, config_path=config_path, service=service,
                      keys=private_keys, keystore=keystore)
    if start_http:
        harness.server = GovHttpServer(service).start()
    return harness


def post_envelope(url: str, path: str, envelope: dict, timeout: float = 15.0):
    import urllib.error
    import urllib.request

    request = urllib.request.Request(url + path, data=canonical_bytes(envelope),
                                     headers={"Content-Type": "application/json"},
                                     method="POST")
    try:
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


@pytest.fixture
def harness_factory(tmp_path):
    harnesses = []

    def build(fixture_builder, owners, tags, *, start_http=False, name="svc",
              fixture_kwargs=None) -> Harness:
        harness = provision(tmp_path / name, fixture_builder, owners, tags,
                            start_http=start_http, fixture_kwargs=fixture_kwargs)
        harnesses.append(harness)
        return harness

    yield build
    for harness in harnesses:
        harness.stop()
