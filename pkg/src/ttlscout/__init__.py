"""TTL-based identification of industrial control system honeypots.

Reconstructs a remote host's initial IP TTL from a ping reply and a
traceroute hop count, matches it against a reference table of genuine
Siemens S7 device TTLs versus operating-system defaults, and
cross-checks the verdict against Shodan's honeypot tagging.
"""

__version__ = "0.1.0"

from ttlscout.fingerprints import (
    Fingerprint,
    FingerprintKind,
    FingerprintSet,
    MatchResult,
    builtin_set,
    load_fingerprints,
    nearest_match,
)
from ttlscout.analysis import (
    Category,
    LocalVerdict,
    ReconstructedTTL,
    VerdictKind,
    classify,
    compare,
    reconstruct_ttl,
)

__all__ = [
    "Fingerprint",
    "FingerprintKind",
    "FingerprintSet",
    "MatchResult",
    "builtin_set",
    "load_fingerprints",
    "nearest_match",
    "Category",
    "LocalVerdict",
    "ReconstructedTTL",
    "VerdictKind",
    "classify",
    "compare",
    "reconstruct_ttl",
    "__version__",
]
