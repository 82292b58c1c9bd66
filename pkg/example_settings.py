"""
Example settings override for genext.

Point --settings (or GENEXT_SETTINGS_MODULE) at this module to use it.
Anything not set here keeps its default from genext.settings.
"""

# Smaller pages make per-page metrics visible on the small benchmarks.
PAGE_WORDS = 64

# A degree-64 modulus; any irreducible polynomial of degree 2..128 works.
MODULUS = "t^64+t^4+t^3+t+1"

MAX_STATES = 20_000

EQUIVALENCE_SAMPLES = 50
SEED = 7

LOG_LEVEL = "INFO"
