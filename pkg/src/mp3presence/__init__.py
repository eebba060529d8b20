"""Private presence: encrypted epoch records, broadcast key distribution, multi-server PIR."""

from .broadcast import DecryptionKey, ManagerKey, RevocationList
from .client import Client, LtOutcome, Presence, ProtocolParams, Status, TierEndpoints
from .errors import MP3Error
from .pir import PirDatabase, PirMeta
from .server_lookup import LookupServer
from .server_reg import RegistrationServer
from .sim import MetricsRow, SimConfig, run_sim

__all__ = [
    "Client", "DecryptionKey", "LookupServer", "LtOutcome", "ManagerKey", "MP3Error",
    "MetricsRow", "PirDatabase", "PirMeta", "Presence", "ProtocolParams", "RegistrationServer",
    "RevocationList", "SimConfig", "Status", "TierEndpoints", "run_sim",
]
