"""
命令行子命令
"""

from .evaluate import EvaluateCommand
from .featurize import FeaturizeCommand
from .plot import PlotCommand
from .preprocess import PreprocessCommand
from .stats import StatsCommand
from .synth import SynthCommand
from .train_clf import TrainClassifierCommand
from .train_gan import TrainGanCommand

COMMANDS = {
    command.name: command
    for command in (
        PreprocessCommand,
        FeaturizeCommand,
        TrainGanCommand,
        SynthCommand,
        TrainClassifierCommand,
        EvaluateCommand,
        PlotCommand,
        StatsCommand,
    )
}

__all__ = ["COMMANDS"]
