"""App protocol shared by the engine, the recovery driver, and tests.

An app is a deterministic staged program.  It declares its stage list
once at construction; the engine drives the stages in order, calling
`stage_gen` for COMM/COMPUTE stages and handling CHECKPOINT/VALIDATE
stages itself.  `init_state` must be a pure function of (config, rank)
so that a relaunch from the beginning reproduces the original run.
"""


class App:
    name = "base"

    def __init__(self, config):
        self.config = config
        self.nranks = config.ranks

    def stages(self):
        raise NotImplementedError

    def init_state(self, rank) -> dict:
        raise NotImplementedError

    def stage_gen(self, stage, ctx, rank, sid, state):
        """Generator of scheduling tokens, or None when the rank idles."""
        return None

    def result_keys(self, rank):
        """State keys validated at the final stage and reported as the result."""
        return []

    def summarize(self, engine) -> dict:
        """Small JSON-safe summary of the computed result."""
        return {}

    def reference_result(self):
        """Unreplicated sequential computation of the same result, using
        the same kernels in the same order; for equivalence checks."""
        raise NotImplementedError
