from .jacobi import JacobiApp
from .matmul import MatmulApp
from .smithwaterman import SmithWatermanApp

APPS = {
    "matmul": MatmulApp,
    "jacobi": JacobiApp,
    "sw": SmithWatermanApp,
}


def make_app(config):
    try:
        cls = APPS[config.app]
    except KeyError:
        raise ValueError("unknown app %r" % config.app)
    return cls(config)
