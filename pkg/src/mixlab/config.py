"""Package-wide numerical constants."""

#: Value returned by agreement_length when two histories cannot be told apart.
AGREEMENT_CAP = 2**16

#: Largest number of table entries any enumeration may materialize.
ENUMERATION_BUDGET = 2**22

#: Infinite-memory kernels are truncated where the variation tail drops below this.
TRUNCATION_TOL = 1e-12

#: Monte-Carlo runs are generated in chunks of this size, one RNG stream per chunk.
CHUNK_RUNS = 8192
