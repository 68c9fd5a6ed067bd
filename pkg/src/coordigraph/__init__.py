"""Subequivariant graph-network policies trained with PPO on desk-scale physics."""

from .autodiff import (AdamState, DomainError, ShapeError, Tape, Tensor,
                       adam_init, adam_step)
from .envs import (ChainEnvConfig, ChainState, LqrEnvConfig, LqrState, Task,
                   chain_energy, chain_observe, chain_reset, chain_step,
                   lqr_observe, lqr_optimal_gain, lqr_reset, lqr_riccati,
                   lqr_step, make_chain_task, make_lqr_task, reflect_obs,
                   reflect_state)
from .morphology import (MorphologyGraph, NodeKind, NodeSpec, ShapeDescriptor,
                         build_chain, gcn_norm, neighbors, validate)
from .network import (GravityFrame, NetConfig, NetParams, NodeFeatures,
                      PolicyOutput, center_vectors, encode, forward,
                      init_params, log_prob, torque_readout)
from .ppo import (NumericalError, PpoConfig, RolloutBatch, UpdateStats,
                  adapt_lr, collect_rollout, compute_advantage,
                  compute_returns, episode_returns, ppo_loss, ppo_update)
from .rng import StreamKey, stream
from .config import (AblationConfig, ConfigError, MorphologyConfig, RunConfig,
                     RunSection, load_config, make_task, net_config,
                     parse_config, render_config)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .checks import (CheckReport, check_equivariance, check_reflection_2d,
                     check_stabilizer_3d, check_translation, grad_check)
from .training import EvalResult, TrainResult, build_params, evaluate, train

__version__ = "0.1.0"
