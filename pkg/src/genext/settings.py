"""
Default genext settings.

Override any of these from your own module and point ``--settings`` or the
``GENEXT_SETTINGS_MODULE`` environment variable at it.
"""

# Words per page; 512 64-bit words is a 4096-byte page (2^15 bits).
PAGE_WORDS = 512

# Upper bound on the address space, in pages.
MAX_PAGES = 2**20

# Fingerprint modulus, as polynomial text or hex.
MODULUS = "t^127+t+1"

# Specialization budgets
MAX_STATES = 100_000
BLOCK_FUEL = 10_000
RUN_FUEL = 10_000_000

# [CoW, fingerprint] mode used when no flag says otherwise
COW_ENABLED = True
FINGERPRINT_ENABLED = True

# Equivalence checking
EQUIVALENCE_SAMPLES = 20
SEED = 1

LOG_LEVEL = "WARNING"
