"""Three friends, one deployment, everything in process.

Alice shares presence with Bob and Carol, then revokes Bob. Run with
``python3 demos/presence_walkthrough.py``.
"""

import random

from mp3presence import Client, LookupServer, ProtocolParams, RegistrationServer, TierEndpoints
from mp3presence.server_reg import LONG, SHORT
from mp3presence.transport import InProcessTransport, Meter

ST_PER_LT = 4
rng = random.Random(7)
meter = Meter()
params = ProtocolParams(n_fmax=5, n_rev=1, t=1, st_per_lt=ST_PER_LT)

lookups = {tier: [LookupServer(k, 30) for k in range(3)] for tier in (LONG, SHORT)}
regs = {
    tier: RegistrationServer(tier, 1, [InProcessTransport(lk) for lk in lookups[tier]],
                             first_epoch=first, rng=rng)
    for tier, first in ((LONG, 1), (SHORT, ST_PER_LT))
}


def client(name):
    def ends(tier):
        return TierEndpoints(
            InProcessTransport(regs[tier], meter, name, f"reg:{tier}"),
            [InProcessTransport(lk, meter, name, f"lookup:{tier}:{k}") for k, lk in enumerate(lookups[tier])],
        )
    return Client(params, ends(LONG), ends(SHORT), rng=random.Random(rng.random()))


alice, bob, carol = client("alice"), client("bob"), client("carol")
# friend bundles travel out of band, e.g. as a QR code
bob.befriend_in("alice", alice.befriend_out("bob"))
carol.befriend_in("alice", alice.befriend_out("carol"))

print("long-term epoch 1: alice registers, the window closes, friends look her up")
alice.register_long_term(1)
regs[LONG].close_epoch()
for name, c in (("bob", bob), ("carol", carol)):
    print(f"  {name:5s} sees alice: {c.lookup_long_term(1)['alice'].value}")

print("short-term epochs: alice posts a status line")
for i in range(ST_PER_LT, 2 * ST_PER_LT):
    while regs[SHORT].window < i:
        regs[SHORT].close_epoch()
    alice.register_short_term(i, f"at my desk ({i})".encode())
    regs[SHORT].close_epoch()
    p = bob.lookup_short_term(i)["alice"]
    print(f"  i={i}  bob sees {p.status.value}: {p.message.decode()}")

print("long-term epoch 2: alice revokes bob")
alice.revoke("bob")
alice.register_long_term(2)
regs[LONG].close_epoch()
print(f"  bob   sees alice: {bob.lookup_long_term(2)['alice'].value}")
print(f"  carol sees alice: {carol.lookup_long_term(2)['alice'].value}")

alice.register_long_term(3)
regs[LONG].close_epoch()
bob.lookup_long_term(3)
carol.lookup_long_term(3)
i = 3 * ST_PER_LT
while regs[SHORT].window < i:
    regs[SHORT].close_epoch()
alice.register_short_term(i, b"bob cannot read this")
regs[SHORT].close_epoch()
print(f"  i={i}  bob: {bob.lookup_short_term(i)['alice'].status.value}, "
      f"carol: {carol.lookup_short_term(i)['alice'].status.value}")

print("bytes on the wire per party:")
for party in ("alice", "bob", "carol"):
    print(f"  {party:5s} out {meter.bytes_out[party]:8d}  in {meter.bytes_in[party]:8d}")
