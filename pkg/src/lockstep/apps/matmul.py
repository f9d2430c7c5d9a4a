"""Master/worker dense matmul.

Rank 0 (master) owns the inputs and the assembled result; ranks 1..W
each compute a contiguous row chunk.  The master takes no part in the
compute stage.  Stage line, with checkpoint slots interleaved at every
phase boundary:

    CK0, SCATTER, CK1, BCAST, CK2, MATMUL, GATHER, CK3, VALIDATE

The matrix size must divide evenly by the worker count.  Each worker row
is computed in COL_BLOCKS column blocks, one scheduling step per block,
which is what gives timeout budgets their granularity.
"""

import numpy as np

from .. import kernels, prng
from ..types import ConfigError, Stage, StageKind
from .base import App

COL_BLOCKS = 16

STAGE_LABELS = [
    "CK0",
    "SCATTER",
    "CK1",
    "BCAST",
    "CK2",
    "MATMUL",
    "GATHER",
    "CK3",
    "VALIDATE",
]


class MatmulApp(App):
    name = "matmul"

    def __init__(self, config):
        super().__init__(config)
        self.n = config.size
        self.workers = config.ranks - 1
        if self.workers < 1:
            raise ConfigError("matmul needs at least 2 ranks (1 master + workers)")
        if self.n % self.workers != 0:
            raise ConfigError(
                "size %d not divisible by worker count %d" % (self.n, self.workers)
            )
        self.chunk = self.n // self.workers

    def stages(self):
        seq = 0
        out = []
        for label in STAGE_LABELS:
            if label.startswith("CK"):
                out.append(Stage(label, StageKind.CHECKPOINT, seq))
                seq += 1
            elif label == "VALIDATE":
                out.append(Stage(label, StageKind.VALIDATE))
            elif label == "MATMUL":
                out.append(Stage(label, StageKind.COMPUTE))
            else:
                out.append(Stage(label, StageKind.COMM))
        return out

    def _inputs(self):
        n = self.n
        a = np.empty((n, n))
        b = np.empty((n, n))
        kernels.fill_uniform_state(prng.derive_state(self.config.seed, "matmul.A"), a)
        kernels.fill_uniform_state(prng.derive_state(self.config.seed, "matmul.B"), b)
        return a, b

    def init_state(self, rank):
        n = self.n
        if rank == 0:
            a, b = self._inputs()
            return {"A": a, "B": b, "C": np.zeros((n, n))}
        return {
            "A": np.zeros((self.chunk, n)),
            "B": np.zeros((n, n)),
            "C": np.zeros((self.chunk, n)),
        }

    def _rows(self, worker):
        r0 = (worker - 1) * self.chunk
        return r0, r0 + self.chunk

    def stage_gen(self, stage, ctx, rank, sid, state):
        label = stage.label
        if label == "SCATTER":
            if rank == 0:
                return self._gen_scatter_master(ctx, state)
            return self._gen_recv_into(ctx, state, 0, "a", "A")
        if label == "BCAST":
            if rank == 0:
                return self._gen_bcast_master(ctx, state)
            return self._gen_recv_into(ctx, state, 0, "b", "B")
        if label == "MATMUL":
            if rank == 0:
                return None
            return self._gen_matmul_worker(ctx, state)
        if label == "GATHER":
            if rank == 0:
                return self._gen_gather_master(ctx, state)
            return self._gen_send(ctx, state, 0, "c", "C")
        return None

    def _gen_scatter_master(self, ctx, state):
        for w in range(1, self.workers + 1):
            r0, r1 = self._rows(w)
            yield ctx.send(w, "a", state["A"][r0:r1])

    def _gen_bcast_master(self, ctx, state):
        for w in range(1, self.workers + 1):
            yield ctx.send(w, "b", state["B"])

    def _gen_recv_into(self, ctx, state, src, tag, key):
        data = yield ctx.recv(src, tag)
        state[key][...] = data

    def _gen_send(self, ctx, state, dst, tag, key):
        yield ctx.send(dst, tag, state[key])

    def _gen_matmul_worker(self, ctx, state):
        a = state["A"]
        b = state["B"]
        c = state["C"]
        rows = a.shape[0]
        n = self.n
        ctx.declare_steps(rows * COL_BLOCKS)
        for r in ctx.loop("outer", rows):
            for blk in ctx.loop("inner", COL_BLOCKS):
                j0 = blk * n // COL_BLOCKS
                j1 = (blk + 1) * n // COL_BLOCKS
                kernels.matmul_row_block(a, b, r, j0, j1, c)
                yield ctx.step()

    def _gen_gather_master(self, ctx, state):
        c = state["C"]
        for w in range(1, self.workers + 1):
            r0, r1 = self._rows(w)
            data = yield ctx.recv(w, "c")
            c[r0:r1] = data

    def result_keys(self, rank):
        return ["C"] if rank == 0 else []

    def summarize(self, engine):
        c = engine.states_of(0)[0]["C"]
        return {"n": self.n, "workers": self.workers, "checksum": float(c.sum())}

    def reference_result(self):
        """Same kernels, same per-element order, no replication."""
        a, b = self._inputs()
        n = self.n
        c = np.zeros((n, n))
        for w in range(1, self.workers + 1):
            r0, r1 = self._rows(w)
            ac = a[r0:r1].copy()
            cc = np.zeros((self.chunk, n))
            for r in range(self.chunk):
                for blk in range(COL_BLOCKS):
                    j0 = blk * n // COL_BLOCKS
                    j1 = (blk + 1) * n // COL_BLOCKS
                    kernels.matmul_row_block(ac, b, r, j0, j1, cc)
            c[r0:r1] = cc
        return {"C": c}
