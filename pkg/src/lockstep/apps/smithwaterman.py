"""Local-alignment wavefront pipeline.

The query is split into column bands, one per rank; the target rows are
processed in ROW_BLOCKS blocks.  At pipeline stage t, rank r computes
block t-r (when in range): a classic wavefront in which rank r+1 is
always one block behind rank r.  The column of scores on a band's right
edge is the only inter-rank coupling; it is held in rank state after the
block that produced it and sent at the start of the next stage, so no
message ever crosses a stage boundary and every stage boundary is a
safe checkpoint cut.

Scoring is fixed: match +1, mismatch -1, gap -2.  Scores are integers,
so results are bit-exact on either kernel path.  The reported result is
the best (score, row, col) with the earliest band, block, row, col
winning ties.
"""

import numpy as np

from .. import kernels, prng
from ..types import ConfigError, Stage, StageKind
from .base import App

ROW_BLOCKS = 8


class SmithWatermanApp(App):
    name = "sw"

    def __init__(self, config):
        super().__init__(config)
        self.n = config.size
        if self.n < ROW_BLOCKS:
            raise ConfigError("sequence length must be at least %d" % ROW_BLOCKS)
        if self.nranks < 1 or self.nranks > self.n:
            raise ConfigError("rank count must be in [1, n]")
        self.blocks = ROW_BLOCKS
        npipe = self.blocks + self.nranks - 1
        self.npipe = npipe
        self.ckpt_every = config.ckpt_every or max(1, npipe // 3)

    def _band(self, rank):
        c0 = rank * self.n // self.nranks
        c1 = (rank + 1) * self.n // self.nranks
        return c0, c1

    def _block(self, b):
        r0 = b * self.n // self.blocks
        r1 = (b + 1) * self.n // self.blocks
        return r0, r1

    def stages(self):
        out = [Stage("CK0", StageKind.CHECKPOINT, 0)]
        seq = 1
        for t in range(self.npipe):
            out.append(Stage("PIPE%d" % t, StageKind.COMPUTE))
            if (t + 1) % self.ckpt_every == 0 and t + 1 < self.npipe:
                out.append(Stage("CK%d" % seq, StageKind.CHECKPOINT, seq))
                seq += 1
        out.append(Stage("REDUCE", StageKind.COMM))
        out.append(Stage("VALIDATE", StageKind.VALIDATE))
        return out

    def _sequences(self):
        t = np.empty(self.n, dtype=np.int64)
        q = np.empty(self.n, dtype=np.int64)
        kernels.fill_letters_state(prng.derive_state(self.config.seed, "sw.T"), t, 4)
        kernels.fill_letters_state(prng.derive_state(self.config.seed, "sw.Q"), q, 4)
        return t, q

    def init_state(self, rank):
        t, q = self._sequences()
        c0, c1 = self._band(rank)
        return {
            "t": t,
            "q": q[c0:c1].copy(),
            "top": np.zeros(c1 - c0 + 1, dtype=np.int64),
            "best": np.array([0, -1, -1], dtype=np.int64),
            "right": np.zeros(1, dtype=np.int64),
            "right_block": -1,
        }

    def stage_gen(self, stage, ctx, rank, sid, state):
        label = stage.label
        if label.startswith("PIPE"):
            return self._gen_pipe(ctx, rank, state, int(label[4:]))
        if label == "REDUCE":
            return self._gen_reduce(ctx, rank, state)
        return None

    def _gen_pipe(self, ctx, rank, state, t):
        b = t - rank
        neighbor_block = t - rank - 1
        sends = (
            rank + 1 < self.nranks
            and 0 <= neighbor_block < self.blocks
            and state["right_block"] == neighbor_block
        )
        computes = 0 <= b < self.blocks
        if not (sends or computes):
            return None

        def gen():
            if sends:
                yield ctx.send(rank + 1, "bd%d" % neighbor_block, state["right"])
            if computes:
                r0, r1 = self._block(b)
                nr = r1 - r0
                if rank > 0:
                    data = yield ctx.recv(rank - 1, "bd%d" % b)
                    left = data[1:]
                else:
                    left = np.zeros(nr, dtype=np.int64)
                c0, c1 = self._band(rank)
                nc = c1 - c0
                bottom = np.empty(nc + 1, dtype=np.int64)
                right = np.empty(nr + 1, dtype=np.int64)
                ctx.declare_steps(1)
                best, bi, bj = kernels.sw_block(
                    state["t"][r0:r1], state["q"], state["top"], left, bottom, right, r0, c0
                )
                yield ctx.step()
                state["top"] = bottom
                state["right"] = right
                state["right_block"] = b
                if best > state["best"][0]:
                    state["best"][0] = best
                    state["best"][1] = bi
                    state["best"][2] = bj

        return gen()

    def _gen_reduce(self, ctx, rank, state):
        if rank == 0:
            best = state["best"]
            for src in range(1, self.nranks):
                cand = yield ctx.recv(src, "best")
                if cand[0] > best[0]:
                    best[...] = cand
        else:
            yield ctx.send(0, "best", state["best"])

    def result_keys(self, rank):
        return ["best"] if rank == 0 else []

    def summarize(self, engine):
        best = engine.states_of(0)[0]["best"]
        return {
            "n": self.n,
            "score": int(best[0]),
            "row": int(best[1]),
            "col": int(best[2]),
        }

    def reference_result(self):
        t, q = self._sequences()
        best = np.array([0, -1, -1], dtype=np.int64)
        rights = {}
        for rank in range(self.nranks):
            c0, c1 = self._band(rank)
            nc = c1 - c0
            qband = q[c0:c1]
            top = np.zeros(nc + 1, dtype=np.int64)
            for b in range(self.blocks):
                r0, r1 = self._block(b)
                nr = r1 - r0
                left = rights[b][1:] if rank > 0 else np.zeros(nr, dtype=np.int64)
                bottom = np.empty(nc + 1, dtype=np.int64)
                right = np.empty(nr + 1, dtype=np.int64)
                s, bi, bj = kernels.sw_block(t[r0:r1], qband, top, left, bottom, right, r0, c0)
                top = bottom
                rights[b] = right
                if s > best[0]:
                    best[:] = (s, bi, bj)
        return {"best": best}
