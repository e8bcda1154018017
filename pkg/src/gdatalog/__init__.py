"""Generative Datalog over probabilistic databases.

Programs whose rule heads may sample from parameterised distributions are
run by a keyed-randomness chase; possible worlds drawn from probabilistic
tables or programs are pushed through queries and summarised by Monte
Carlo estimates with confidence intervals.
"""

__version__ = "0.1.0"

from .chase import (  # noqa: E402
    CENSORED,
    FAILED,
    FIXPOINT,
    ChaseState,
    FiringKey,
    FirstPolicy,
    LastPolicy,
    ShuffledPolicy,
    WorldResult,
    applicable_keys,
    fire,
    make_policy,
    run_chase,
    run_deterministic_datalog,
)
from .distributions import DISTRIBUTIONS, cdf, pdf, sample, validate_params  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .events import (  # noqa: E402
    And,
    AttrCompare,
    Compare,
    CountingAtom,
    FactPredicate,
    Not,
    Or,
    event_holds,
    multiplicity,
    parse_event,
)
from .instance import BAG, SET, Instance, to_set  # noqa: E402
from .pdb import (  # noqa: E402
    Cell,
    ComposedSource,
    Estimate,
    GenerativeSource,
    ProbTable,
    TableRow,
    TableSource,
    estimate_event,
    estimate_group_moments,
    sample_world,
)
from .program import (  # noqa: E402
    format_program,
    head_instantiation_signature,
    parse_program,
    validate_program,
)
from .query import eval_query, parse_query  # noqa: E402
from .rng import RngStream, cell_key, site_key, stable_hash  # noqa: E402
from .schema import Fact, RelationSchema, Schema, make_fact  # noqa: E402
from .stats import wilson_interval  # noqa: E402
