"""Monte Carlo pricing and hedging of FX put options under permanent market
impact, using QLBS-style rewards and backward Fitted Q-Iteration."""

from .errors import ConfigError, ModelError, NonPositiveRate, SingularSystem
from .market import (
    ImpactSeries,
    MarketParams,
    PathMatrix,
    StateMatrix,
    book_density,
    order_cost,
    propagate_impact,
    sample_impact,
    simulate_unaffected,
    state_variables,
    supply_price,
)
from .hedging import (
    PortfolioMatrix,
    RewardMatrix,
    StrategyMatrix,
    fair_price,
    payoff,
    portfolio_recursion,
    rewards,
    sample_strategy,
    transaction_costs,
)
from .features import KnotVector, build_knots, eval_basis, psi
from .fqi import (
    Dataset,
    FittedModel,
    UWRows,
    assemble_dataset,
    fit,
    implied_rollout,
    optimal_action,
    optimal_q,
    qlbs_price,
    u_w,
)

__version__ = "0.1.0"
