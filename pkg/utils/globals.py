# Numeric defaults shared across the pipeline
REGULARIZATION_FLOOR = 1e-6
REGULARIZATION_POLICIES = ["none", "diagonal", "factor", "within", "block"]
DEFAULT_REGULARIZATION = "block"
DEFAULT_STATE_REGULARIZATION = "within"

MLE_MAX_ITER = 50
MLE_TOLERANCE = 1e-9
CONDITION_MAX_ITER = 10
CONDITION_TOLERANCE = 1e-9
PRODUCT_MAX_ITER = 100
PRODUCT_TOLERANCE = 1e-9

KL_SAMPLES = 10_000
ROLLOUT_KL_SAMPLES = 2_000
KL_MAX_REDRAWS = 100

EM_MAX_ITER = 100
EM_TOLERANCE = 1e-5
PRUNE_MASS = 1e-8
SELF_TRANSITION = 0.9
DEFAULT_K = 5

# Per-step motion below which a direction is held from the previous step.
VELOCITY_EPSILON = 1e-6
ANGULAR_EPSILON = 1e-6
# The same cutoffs for the velocities a state-driven model is trained on; above
# the sensor jitter of the synthetic demos (5e-5 m per sample).
MODEL_VELOCITY_EPSILON = 1e-3
MODEL_ANGULAR_EPSILON = 2e-3

# A state-driven policy whose commands stay below these for SETTLE_STEPS
# steps has settled; its state moves on to the next component.
SETTLE_SPEED = 1e-3
SETTLE_ANGLE = 2e-3
SETTLE_STEPS = 10

SCHEMA_HMM = "tapas.hmm/1"
SCHEMA_SKILL = "tapas.skill/1"
SCHEMA_TASK = "tapas.task/1"
SCHEMA_DATASET = "tapas.dataset/1"
SCHEMA_RELEVANCE = "tapas.relevance/1"

SEED_ENV_VAR = "TAPAS_SEED"
