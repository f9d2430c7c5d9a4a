"""SPMD stencil relaxation with halo exchange.

The n x n grid is split into horizontal bands of interior rows, one per
rank; every rank keeps its band plus one halo row on each side.  Each
iteration is an exchange stage (validated sends of edge rows) followed
by a sweep stage (one scheduling step per row).  Checkpoint stages are
inserted every `ckpt_every` iterations; a final reduce gathers the
bands and the last sweep's max residual to rank 0, which then owns the
assembled grid as the run's validated result.

Boundary rows and columns are fixed, iteration count is fixed (no
data-dependent exit), so the whole schedule is deterministic.
"""

import numpy as np

from .. import kernels, prng
from ..types import ConfigError, Stage, StageKind
from .base import App


class JacobiApp(App):
    name = "jacobi"

    def __init__(self, config):
        super().__init__(config)
        self.n = config.size
        self.iters = config.iters
        if self.n < 4:
            raise ConfigError("grid size must be at least 4")
        if self.nranks < 1 or self.nranks > self.n - 2:
            raise ConfigError("rank count must be in [1, n-2]")
        if self.iters < 1:
            raise ConfigError("iteration count must be positive")
        self.ckpt_every = config.ckpt_every or max(1, self.iters // 4)
        base, rem = divmod(self.n - 2, self.nranks)
        sizes = [base + 1] * rem + [base] * (self.nranks - rem)
        starts = [1]
        for s in sizes[:-1]:
            starts.append(starts[-1] + s)
        self.band = dict(enumerate(zip(starts, sizes)))

    def stages(self):
        out = [Stage("CK0", StageKind.CHECKPOINT, 0)]
        seq = 1
        for it in range(self.iters):
            out.append(Stage("EXCH%d" % it, StageKind.COMM))
            out.append(Stage("SWEEP%d" % it, StageKind.COMPUTE))
            if (it + 1) % self.ckpt_every == 0:
                out.append(Stage("CK%d" % seq, StageKind.CHECKPOINT, seq))
                seq += 1
        out.append(Stage("REDUCE", StageKind.COMM))
        out.append(Stage("VALIDATE", StageKind.VALIDATE))
        return out

    def _full_grid(self):
        g = np.empty((self.n, self.n))
        kernels.fill_uniform_state(prng.derive_state(self.config.seed, "jacobi.grid"), g)
        return g

    def init_state(self, rank):
        g = self._full_grid()
        r0, rows = self.band[rank]
        state = {
            "grid": g[r0 - 1 : r0 + rows + 1].copy(),
            "buf": np.zeros((rows + 2, self.n)),
            "resid": 0.0,
        }
        if rank == 0:
            state["residual"] = 0.0
            state["full"] = np.zeros((self.n, self.n))
        return state

    def stage_gen(self, stage, ctx, rank, sid, state):
        label = stage.label
        if label.startswith("EXCH"):
            return self._gen_exchange(ctx, rank, state, label[4:])
        if label.startswith("SWEEP"):
            return self._gen_sweep(ctx, rank, state)
        if label == "REDUCE":
            return self._gen_reduce(ctx, rank, state)
        return None

    def _gen_exchange(self, ctx, rank, state, it):
        g = state["grid"]
        rows = g.shape[0] - 2
        up = rank - 1
        down = rank + 1
        if up >= 0:
            yield ctx.send(up, "u" + it, g[1])
        if down < self.nranks:
            yield ctx.send(down, "d" + it, g[rows])
        if up >= 0:
            data = yield ctx.recv(up, "d" + it)
            g[0] = data
        if down < self.nranks:
            data = yield ctx.recv(down, "u" + it)
            g[rows + 1] = data

    def _gen_sweep(self, ctx, rank, state):
        g = state["grid"]
        buf = state["buf"]
        rows = g.shape[0] - 2
        ctx.declare_steps(rows)
        buf[...] = g
        resid = 0.0
        for i in ctx.loop("rows", rows):
            r = kernels.jacobi_sweep_row(g, buf, i + 1)
            if r > resid:
                resid = r
            yield ctx.step()
        state["resid"] = float(resid)
        state["grid"], state["buf"] = state["buf"], state["grid"]

    def _gen_reduce(self, ctx, rank, state):
        last = self.nranks - 1
        if rank == 0:
            g = state["grid"]
            full = state["full"]
            _, rows = self.band[0]
            # rank 0's top halo is the fixed top boundary row
            stop = rows + 2 if last == 0 else rows + 1
            full[0:stop] = g[0:stop]
            best = state["resid"]
            for src in range(1, self.nranks):
                r0, rows = self.band[src]
                data = yield ctx.recv(src, "band")
                stop = rows + 1 if src == last else rows
                full[r0 : r0 + stop] = data
                data = yield ctx.recv(src, "res")
                if data[0] > best:
                    best = data[0]
            state["residual"] = float(best)
        else:
            g = state["grid"]
            rows = g.shape[0] - 2
            # the last band carries the fixed bottom boundary row along
            stop = rows + 2 if rank == last else rows + 1
            yield ctx.send(0, "band", g[1:stop])
            yield ctx.send(0, "res", np.array([state["resid"]]))

    def result_keys(self, rank):
        return ["full", "residual"] if rank == 0 else []

    def summarize(self, engine):
        s0 = engine.states_of(0)[0]
        return {
            "n": self.n,
            "iters": self.iters,
            "residual": float(s0["residual"]),
            "checksum": float(s0["full"].sum()),
        }

    def reference_result(self):
        g = self._full_grid()
        buf = np.zeros_like(g)
        resid = 0.0
        for _ in range(self.iters):
            buf[...] = g
            resid = 0.0
            for i in range(1, self.n - 1):
                r = kernels.jacobi_sweep_row(g, buf, i)
                if r > resid:
                    resid = r
            g, buf = buf, g
        return {"full": g, "residual": float(resid)}
