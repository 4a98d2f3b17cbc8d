"""Threshold equilibria of a producer-consumer price-control game.

A producer moves a commodity price with costly impulses; a consumer toggles
its drift between expansion and contraction at a switching cost.  This
package computes the players' closed-form best responses, iterates them to
threshold-type Nash equilibria, and simulates/analyzes the resulting
controlled price process.
"""

from .model import (
    ConfigError,
    ConsumerCurve,
    DirectProfit,
    ModelParams,
    ProducerCurve,
    QuadProfit,
    build_profits,
    char_roots,
    load_config,
    particular_solution,
    regime_fundamentals,
)
from .values import PiecewiseValue, ProducerRow, RegimePair, StrategyPair
from .consumer import (
    ConsumerBR,
    consumer_alone,
    consumer_best_response,
    double_switch_br,
    no_switch_value,
    single_switch_br,
)
from .producer import (
    ProducerBR,
    impulse_cost,
    monopoly_two_sided,
    nonpreemptive_br,
    preemptive_br,
    producer_best_response,
)
from .equilibrium import EquilibriumResult, classify, tatonnement, verify
from . import dynamics

__version__ = "0.1.0"
