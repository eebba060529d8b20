"""Server and client bandwidth as the user base grows.

Metered simulation: every byte is counted at its real wire size, but only a
couple of observer clients run the full PIR computation.
"""

import sys

from mp3presence.sim import SimConfig, fit_scaling, sweep

ns = [int(a) for a in sys.argv[1:]] or [100, 200, 400, 800]
base = SimConfig(N=ns[0], n_fmax=100, lt_epochs=1, st_epochs_per_lt=1, pir_mode="metered", observers=1)
rows = sweep(base, ns)

print(f"{'N':>6} {'tier':>4} {'db bytes':>10} {'lookup out':>12} {'client in':>10} {'dp5 bytes':>12}")
for r in rows:
    print(f"{r.N:6d} {r.kind:>4} {r.db_bytes:10d} {r.lookup_server_out_bytes:12d} "
          f"{r.client_in_bytes:10.0f} {r.dp5_baseline_bytes:12d}")

if len(set(ns)) >= 4:
    print()
    for f in fit_scaling(rows):
        print(f"{f.quantity:28s} slope {f.slope:5.2f}  R2 {f.r2:.4f}")
