"""Controllable human motion prediction with per-chain adversarial generators.

Five kinematic-chain recurrent VAE generators with local Wasserstein
critics feed an aggregation layer judged by a global critic; latent-space
interpolation bridges actions and per-chain substitution gives fine-grained
control over the predicted motion.
"""

from .kinematics import (ChainVector, Pose, SkeletonTopology, default_topology,
                         forward_kinematics, load_topology, merge_chains,
                         split_pose, toy_topology)
from .data import (MotionSequence, NormalizationStats, SyntheticMotionSpec,
                   WindowConfig, cut_windows, downsample, fit_normalization,
                   load_motion_csv, synthesize_motion, synthetic_testbed)
from .model import (Aggregator, ChainGeneratorStack, Critic, LatentCode,
                    ModelConfig, MotionGAN, load_checkpoint, reparameterize,
                    save_checkpoint)
from .losses import (LossRecord, LossWeights, chain_wgan_loss,
                     consistency_loss, global_loss, gradient_penalty,
                     ground_truth_loss, kl_divergence, local_loss,
                     pose_wgan_loss, stability_loss)
from .training import Adam, TrainConfig, Trainer, TrainingDiverged, train
from .control import (ActionModelRegistry, NextPoseVAE, TransferConfig,
                      action_transfer, fine_grained_control,
                      interpolate_latents, splice_transfer,
                      train_next_pose_vae)
from .evaluation import (EvalReport, HorizonSet, ablation_run, benchmark,
                         default_horizons, mae, model_predictor,
                         prepare_synthetic_benchmark, zero_velocity_baseline)

__version__ = "0.1.0"
