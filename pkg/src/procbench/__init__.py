"""Benchmark engine for learning-based chemical process control.

Four nonlinear process environments with episodic discrete-time semantics,
disturbance/constraint/reward customization, a receding-horizon NMPC
oracle, and a policy-evaluation harness producing median return, MAD,
optimality gap and constraint-violation probability.
"""

__version__ = "0.1.0"

from .env import EnvConfig, Environment, StepResult, apply_noise, denormalize, make_env, normalize
from .errors import (ConfigurationError, EngineError, EpisodeComplete,
                     IntegrationError, PolicyError, PolicyTimeoutError,
                     ProtocolError, RewardHookError, UndefinedOutputError,
                     UnknownModelError)
from .eval import (EvaluationReport, build_report, mad, median, median_and_std,
                   optimality_gap, rollout, std_dev, violation_probability)
from .models import (CrystallizationOutputs, ModelDescriptor, available_models,
                     crystallization_outputs, model_registry)
from .oracle import OcpSolution, OcpSpec, OraclePolicy, mpc_policy, solve_ocp
from .policy import (ConstantPolicy, ExternalPolicy, Policy, RandomPolicy, StepView,
                     constant_policy, external_policy, random_policy)
from .rewards import (RewardContext, RewardSelector, abs_error_reward,
                      shaped_reward, sparse_reward, squared_error_reward,
                      tracking_reward)
from .scenario import (Constraint, ConstraintSet, DisturbanceSchedule, Scenario,
                       SetpointSchedule, bundled_scenarios, constraint_values,
                       disturbance_at, load_bundled_scenario, load_scenario,
                       setpoint_at)
from .sim import IntegratorConfig, integrate, rk4
