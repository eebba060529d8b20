"""Command-line entry points: client, registration daemon, lookup daemon, simulator.

All four read one JSON deployment config::

    {
      "genesis": 1700000000, "lt_duration": 86400, "st_duration": 300,
      "n_rev": 1, "n_fmax": 100, "t": 1, "h_keep": 30, "msg_len": 256,
      "record_cap": 1000, "fault_injection": false,
      "long":  {"registration": "127.0.0.1:7001", "lookups": ["127.0.0.1:7101", ...]},
      "short": {"registration": "127.0.0.1:7002", "lookups": ["127.0.0.1:7201", ...]}
    }
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
import time
from pathlib import Path

from . import sim
from .client import Client, OutOfBandBundle, ProtocolParams, TierEndpoints
from .epochs import EpochClock
from .errors import MP3Error
from .server_lookup import LookupServer
from .server_reg import LONG, SHORT, RegistrationServer
from .transport import FrameServer, TcpTransport, parse_address

log = logging.getLogger("mp3presence")

DEFAULTS = {
    "genesis": 0,
    "lt_duration": 86400,
    "st_duration": 300,
    "n_rev": 1,
    "n_fmax": 100,
    "t": 1,
    "h_keep": 30,
    "msg_len": 256,
    "record_cap": None,
    "fault_injection": False,
}


def load_config(path: str | Path) -> dict:
    with open(path) as fh:
        cfg = {**DEFAULTS, **json.load(fh)}
    for tier in (LONG, SHORT):
        if tier not in cfg:
            raise ValueError(f"config is missing the {tier!r} tier")
    return cfg


def clock_of(cfg: dict) -> EpochClock:
    return EpochClock(cfg["genesis"], cfg["lt_duration"], cfg["st_duration"])


def params_of(cfg: dict) -> ProtocolParams:
    clock = clock_of(cfg)
    return ProtocolParams(
        n_fmax=cfg["n_fmax"], n_rev=cfg["n_rev"], t=cfg["t"], h_keep=cfg["h_keep"],
        st_per_lt=clock.st_per_lt, msg_len=cfg["msg_len"],
    )


def _logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


# -- client ------------------------------------------------------------------

def _endpoints(cfg: dict, tier: str, servers: list[str] | None) -> TierEndpoints:
    lookups = servers or cfg[tier]["lookups"]
    return TierEndpoints(
        registration=TcpTransport(cfg[tier]["registration"]),
        lookups=[TcpTransport(a) for a in lookups],
    )


def _open_client(args, cfg: dict) -> Client:
    servers = args.servers.split(",") if args.servers else None
    client = Client(
        params_of(cfg),
        long=_endpoints(cfg, LONG, servers if args.command in ("lookup-lt", "catchup") else None),
        short=_endpoints(cfg, SHORT, servers if args.command == "lookup-st" else None),
    )
    client.load_state(Path(args.store).read_bytes())
    return client


def _save(client: Client, path: str) -> None:
    tmp = Path(path + ".tmp")
    tmp.write_bytes(client.state_bytes())
    tmp.replace(path)


def client_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="mp3", description="Private presence client.")
    ap.add_argument("--config", required=True)
    ap.add_argument("--store", default="mp3.keystore", help="key store file")
    ap.add_argument("--servers", help="comma-separated lookup server addresses (override)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("keygen")
    friend = sub.add_parser("friend")
    friend.add_argument("action", choices=["export", "import"])
    friend.add_argument("name")
    friend.add_argument("--file", required=True, help="bundle file to write or read")
    rv = sub.add_parser("revoke")
    rv.add_argument("name")
    for name in ("register-lt", "lookup-lt", "catchup", "lookup-st"):
        p = sub.add_parser(name)
        p.add_argument("--epoch", type=int)
    rs = sub.add_parser("register-st")
    rs.add_argument("--message", required=True)
    rs.add_argument("--epoch", type=int)
    args = ap.parse_args(argv)
    _logging(args.verbose)
    cfg = load_config(args.config)
    clock = clock_of(cfg)
    now_j, now_i = clock.epoch_at(time.time())

    try:
        if args.command == "keygen":
            if Path(args.store).exists():
                print(f"refusing to overwrite {args.store}", file=sys.stderr)
                return 1
            client = Client(params_of(cfg), epoch=now_j)
            _save(client, args.store)
            print(f"wrote key store {args.store}")
            return 0

        client = _open_client(args, cfg)
        if args.command == "friend":
            path = Path(args.file)
            if args.action == "export":
                path.write_bytes(client.befriend_out(args.name).to_bytes())
                print(f"bundle for {args.name} written to {path}")
            else:
                client.befriend_in(args.name, OutOfBandBundle.from_bytes(path.read_bytes()))
                print(f"now following {args.name}")
        elif args.command == "revoke":
            client.revoke(args.name)
            print(f"{args.name} will be revoked at the next long-term registration")
        elif args.command == "register-lt":
            j = args.epoch if args.epoch is not None else now_j + 1
            client.register_long_term(j)
            print(f"registered long-term epoch {j}")
        elif args.command == "register-st":
            i = args.epoch if args.epoch is not None else now_i + 1
            client.register_short_term(i, args.message.encode())
            print(f"registered short-term epoch {i}")
        elif args.command in ("lookup-lt", "catchup"):
            j = args.epoch if args.epoch is not None else now_j
            if args.command == "catchup":
                reports = client.sync_long_term(j)
            else:
                reports = [client.lookup_long_term(j)]
            for k, report in enumerate(reports, start=j - len(reports) + 1):
                for name, outcome in sorted(report.items()):
                    print(f"{k}\t{name}\t{outcome.value}")
        elif args.command == "lookup-st":
            i = args.epoch if args.epoch is not None else now_i
            for name, presence in sorted(client.lookup_short_term(i).items()):
                extra = "" if presence.message is None else "\t" + presence.message.decode(errors="replace")
                print(f"{i}\t{name}\t{presence.status.value}{extra}")
        _save(client, args.store)
    except MP3Error as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


# -- daemons -----------------------------------------------------------------

def _serve(server: FrameServer) -> None:
    log.info("listening on %s", server.address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def _epoch_closer(reg: RegistrationServer, clock: EpochClock, stop: threading.Event) -> None:
    """Close the open window at the boundary where its epoch begins."""
    while not stop.is_set():
        if reg.tier == LONG:
            boundary = clock.lt_bounds(reg.window)[0]
        else:
            boundary = clock.st_bounds(reg.window)[0]
        if stop.wait(max(0.0, boundary - time.time())):
            return
        db = reg.close_epoch()
        log.info("published %s epoch %d with %d records", reg.tier, db.meta.epoch, db.n_real)


def regd_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="mp3-regd", description="Registration server.")
    ap.add_argument("--config", required=True)
    ap.add_argument("--tier", choices=[LONG, SHORT], required=True)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    _logging(args.verbose)
    cfg = load_config(args.config)
    clock = clock_of(cfg)
    j, i = clock.epoch_at(max(time.time(), clock.genesis))
    reg = RegistrationServer(
        args.tier, cfg["n_rev"], [TcpTransport(a) for a in cfg[args.tier]["lookups"]],
        h_keep=cfg["h_keep"] if args.tier == LONG else 1, msg_len=cfg["msg_len"],
        first_epoch=(j if args.tier == LONG else i) + 1,
    )
    stop = threading.Event()
    threading.Thread(target=_epoch_closer, args=(reg, clock, stop), daemon=True).start()
    server = FrameServer(parse_address(cfg[args.tier]["registration"]), reg, cfg["record_cap"])
    _serve(server)
    stop.set()
    return 0


def lookupd_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="mp3-lookupd", description="PIR lookup server.")
    ap.add_argument("--config", required=True)
    ap.add_argument("--index", type=int, required=True)
    ap.add_argument("--tier", choices=[LONG, SHORT], default=LONG)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    _logging(args.verbose)
    cfg = load_config(args.config)
    addresses = cfg[args.tier]["lookups"]
    if not 0 <= args.index < len(addresses):
        ap.error(f"--index must be in [0, {len(addresses)})")
    lookup = LookupServer(
        args.index, cfg["h_keep"] if args.tier == LONG else 1, cfg["fault_injection"]
    )
    _serve(FrameServer(parse_address(addresses[args.index]), lookup))
    return 0


# -- simulator ---------------------------------------------------------------

def _parse_sweep(text: str) -> list[int]:
    key, _, values = text.partition("=")
    if key.strip() != "N" or not values:
        raise argparse.ArgumentTypeError("sweep must look like N=100,200,400")
    return [int(v) for v in values.split(",")]


def sim_main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="mp3-sim", description="In-process protocol simulation.")
    ap.add_argument("--config", required=True, help="JSON object of SimConfig fields")
    ap.add_argument("--out", required=True, help="metrics CSV path")
    ap.add_argument("--sweep", type=_parse_sweep, help="N=100,200,...")
    ap.add_argument("--fit", action="store_true", help="also write <out>.fit.csv with log-log slopes")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    _logging(args.verbose)
    with open(args.config) as fh:
        cfg = sim.SimConfig.from_dict(json.load(fh))
    try:
        cfg.validate()
    except ValueError as exc:
        ap.error(str(exc))

    if args.sweep:
        rows = sim.sweep(cfg, args.sweep)
    else:
        result = sim.run_sim(cfg)
        rows = result.rows
        for line in result.mismatches:
            log.error("ground truth mismatch: %s", line)
    Path(args.out).write_text(sim.rows_to_csv(rows))
    print(f"wrote {len(rows)} rows to {args.out}")
    if args.fit:
        fit_path = Path(args.out).with_suffix(".fit.csv")
        fits = sim.fit_scaling(rows)
        fit_path.write_text(sim.fits_to_csv(fits))
        for f in fits:
            print(f"{f.quantity:28s} slope {f.slope:6.3f}  R2 {f.r2:.4f}")
    return 0
