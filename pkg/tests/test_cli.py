import json
import socket
import subprocess
import sys
import time

import pytest

from mp3presence import cli


def free_ports(n):
    socks = [socket.socket() for _ in range(n)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def run(*args, cwd):
    out = subprocess.run([sys.executable, "-c", "import sys; from mp3presence import cli; "
                          f"sys.exit(cli.{args[0]}(sys.argv[1:]))", *args[1:]],
                         cwd=cwd, capture_output=True, text=True, timeout=60)
    assert out.returncode == 0, out.stderr
    return out.stdout


def wait_until(t):
    time.sleep(max(0.0, t - time.time()))


def test_sim_cli(tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"N": 4, "n_fmax": 3, "lt_epochs": 1, "st_epochs_per_lt": 1,
                               "pir_mode": "metered", "observers": 1}))
    out = tmp_path / "m.csv"
    assert cli.sim_main(["--config", str(cfg), "--out", str(out), "--sweep", "N=4,5,6,7", "--fit"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("N,kind,index,db_bytes")
    assert len(lines) == 1 + 4 * 2
    fit = (tmp_path / "m.fit.csv").read_text().splitlines()
    assert fit[0] == "quantity,slope,r2"


def test_sim_cli_rejects_bad_config(tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"N": 4, "t": 5}))
    with pytest.raises(SystemExit):
        cli.sim_main(["--config", str(cfg), "--out", str(tmp_path / "x.csv")])


@pytest.mark.slow
def test_daemons_and_client_over_tcp(tmp_path):
    ports = free_ports(8)
    addr = [f"127.0.0.1:{p}" for p in ports]
    st, lt = 3, 9
    genesis = int(time.time()) + 1
    config = {
        "genesis": genesis, "lt_duration": lt, "st_duration": st, "n_fmax": 4, "record_cap": 50,
        "long": {"registration": addr[0], "lookups": addr[1:4]},
        "short": {"registration": addr[4], "lookups": addr[5:8]},
    }
    path = tmp_path / "deploy.json"
    path.write_text(json.dumps(config))
    procs = []
    launcher = "import sys; from mp3presence import cli; sys.exit(cli.{}(sys.argv[1:]))"
    try:
        for tier in ("long", "short"):
            for k in range(3):
                procs.append(subprocess.Popen(
                    [sys.executable, "-c", launcher.format("lookupd_main"),
                     "--config", str(path), "--index", str(k), "--tier", tier],
                    stderr=subprocess.DEVNULL))
        time.sleep(1.5)
        wait_until(genesis + 0.2)
        for tier in ("long", "short"):
            procs.append(subprocess.Popen(
                [sys.executable, "-c", launcher.format("regd_main"), "--config", str(path), "--tier", tier],
                stderr=subprocess.DEVNULL))
        time.sleep(1.0)

        def mp3(store, *args):
            return run("client_main", "--config", str(path), "--store", store, *args, cwd=tmp_path)

        mp3("alice.ks", "keygen")
        mp3("bob.ks", "keygen")
        mp3("alice.ks", "friend", "export", "bob", "--file", "for_bob.bin")
        mp3("bob.ks", "friend", "import", "alice", "--file", "for_bob.bin")
        mp3("alice.ks", "register-lt", "--epoch", "1")
        wait_until(genesis + lt + 0.8)
        assert "1\talice\tupdated" in mp3("bob.ks", "catchup")
        now_i = int((time.time() - genesis) // st)
        target = now_i + 1
        mp3("alice.ks", "register-st", "--message", "coffee?", "--epoch", str(target))
        wait_until(genesis + target * st + 0.8)
        assert f"{target}\talice\tonline\tcoffee?" in mp3("bob.ks", "lookup-st", "--epoch", str(target))
    finally:
        for p in procs:
            p.terminate()
        for p in procs:
            p.wait(timeout=10)
