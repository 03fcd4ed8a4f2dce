"""Signal temporal logic: parsing, robustness and boolean satisfaction."""

from .formula import (
    Abs, Always, And, Atom, BinOp, Const, Eventually, FormulaSyntaxError, Interval, Neg,
    Not, Or, Step, TrueF, UnknownChannelError, Until, Var, channels_of, horizon,
    load_formula, parse_formula, to_text,
)
from .semantics import (
    HorizonError, MissingChannelError, eval_bool, robustness, robustness_signal,
    satisfaction_set,
)
from .signal import PLSignal, Signal, SignalError

__all__ = [
    "Abs", "Always", "And", "Atom", "BinOp", "Const", "Eventually", "FormulaSyntaxError",
    "HorizonError", "Interval", "MissingChannelError", "Neg", "Not", "Or", "PLSignal",
    "Signal", "SignalError", "Step", "TrueF", "UnknownChannelError", "Until", "Var",
    "channels_of", "eval_bool", "horizon", "load_formula", "parse_formula", "robustness",
    "robustness_signal", "satisfaction_set", "to_text",
]
