"""Shared types for the execution core."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class StageKind(Enum):
    CHECKPOINT = "checkpoint"
    COMM = "comm"
    COMPUTE = "compute"
    VALIDATE = "validate"


@dataclass(frozen=True)
class Stage:
    label: str
    kind: StageKind
    seq: int = -1  # checkpoint slot for CHECKPOINT stages


class DetectionKind(Enum):
    SDC_MISMATCH = "SDC_MISMATCH"
    TOE_TIMEOUT = "TOE_TIMEOUT"
    FINAL_MISMATCH = "FINAL_MISMATCH"


@dataclass
class DetectionEvent:
    kind: DetectionKind
    rank: int
    stage: str
    step: int
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "rank": self.rank,
            "stage": self.stage,
            "step": self.step,
            "detail": self.detail,
        }


class RunOutcome(Enum):
    COMPLETED_VALID = "COMPLETED_VALID"
    HALTED_ON_DETECTION = "HALTED_ON_DETECTION"
    RECOVERED = "RECOVERED"


class Strategy(Enum):
    NONE = "none"
    SYSTEM = "system"
    APPLICATION = "application"


class Mode(Enum):
    INTERLEAVED = "interleaved"
    THREADED = "threaded"


@dataclass
class FaultSpec:
    """One-shot injected fault.

    kind "flip": XOR bit `bit` into element `elem` of state entry `key`
    of one strand of one rank, at the boundary after stage `after_stage`.
    kind "rewind": during stage `during_stage`, rewind the named loop
    counter ("outer"/"inner") of one strand to zero when the strand's
    step count reaches floor(total_steps * bit / 64), once.
    """

    scenario: int
    rank: int
    strand: int
    kind: str  # "flip" | "rewind"
    key: str  # state key, or loop name for rewinds
    elem: int = 0
    bit: int = 33
    after_stage: Optional[str] = None
    during_stage: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "rank": self.rank,
            "strand": self.strand,
            "kind": self.kind,
            "key": self.key,
            "elem": self.elem,
            "bit": self.bit,
            "after_stage": self.after_stage,
            "during_stage": self.during_stage,
        }


@dataclass(frozen=True)
class ScenarioPrediction:
    """Expected observable outcome of a catalog scenario.

    effect: "LE" latent (run completes clean), "TDC" mismatch caught at a
    transmission, "FSC" mismatch caught at final validation, "TOE" step
    budget exceeded.  detect_stage / recovery_point are stage labels;
    rollbacks counts restarts until the run completes.
    """

    effect: str
    detect_stage: Optional[str]
    recovery_point: Optional[str]
    rollbacks: int

    def to_json(self) -> dict:
        return {
            "effect": self.effect,
            "detect_stage": self.detect_stage,
            "recovery_point": self.recovery_point,
            "rollbacks": self.rollbacks,
        }


@dataclass
class RunConfig:
    app: str = "matmul"
    size: int = 64
    ranks: int = 3
    iters: int = 50  # jacobi only
    strategy: Strategy = Strategy.SYSTEM
    mode: Mode = Mode.INTERLEAVED
    seed: int = 1
    step_budget: int = 8
    wall_timeout_s: float = 5.0
    ckpt_every: int = 0  # 0 = app default cadence
    out_dir: Optional[str] = None
    fault: Optional[FaultSpec] = None


@dataclass
class RunLedger:
    injected: bool = False
    failures: int = 0
    extern_counter: int = 0

    def to_json(self) -> dict:
        return {
            "injected": self.injected,
            "failures": self.failures,
            "extern_counter": self.extern_counter,
        }


@dataclass
class RunReport:
    outcome: RunOutcome
    exit_code: int
    events: list = field(default_factory=list)
    restarts: int = 0
    result_digests: dict = field(default_factory=dict)
    result: dict = field(default_factory=dict)
    wall_s: float = 0.0
    run_dir: Optional[str] = None
    recovery_point: Optional[str] = None  # label of the last restored slot
    relaunched: bool = False  # at least one restart began from scratch
    ledger: Optional["RunLedger"] = None


class ConfigError(ValueError):
    pass


class EngineError(RuntimeError):
    pass
