import utils
from engines.exact_engine import ExactEngine
from engines.ladder_engine import LadderEngine
from engines.numeric_engine import NumericEngine
from engines.sinc_engine import SincEngine

_ENGINES: dict[str, type[LadderEngine]] = {
    utils.EXACT: ExactEngine,
    utils.ODE: NumericEngine,
    utils.SINC: SincEngine,
}


def get_engine(name: str) -> LadderEngine:
    try:
        return _ENGINES[name]()
    except KeyError:
        raise utils.UnknownEngineError(name)
