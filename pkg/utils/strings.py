## This section contains the textual strings used by the command line interface in tapas.py

CLI_DESCRIPTION = """
Learn multi-skill manipulation policies from a handful of demonstrations:
segment the demonstrations into skills, select the task frames each skill
depends on, fit one task-parameterized HMM per skill and chain the skills
into a task model that can be rolled out on new frame configurations.
"""

CLI_EPILOG = """
Commands compose via files:
  synth         -> dataset.json
  segment       -> cuts.json, magnitudes.csv
  select        -> relevance.json, relevance.csv
  fit           -> task_model.json
  predict       -> predictions.csv, predict.json
  rollout, eval -> traces.csv, summary.json
  export-plots  -> magnitudes.html, relevance.html, traces.html

Settings are taken from flags first, then from --config (JSON or TOML, flat or
with one table per command), then from the built-in defaults. Without --seed
the TAPAS_SEED environment variable is used, and 0 without that.
"""

SYNTH_HELP = "Generate demonstrations of a built-in synthetic scenario."
SEGMENT_HELP = "Cut demonstrations into skills at the pauses of the motion."
SELECT_HELP = "Score candidate frames per skill and select the relevant ones."
FIT_HELP = "Learn a task model (segmentation, frame selection and one HMM per skill)."
PREDICT_HELP = "Regress poses or velocity commands of a task model for one demonstration's frames."
ROLLOUT_HELP = "Run a task model once on the synthetic plant."
EVAL_HELP = "Evaluate a task model over episodes with freshly sampled frames."
EXPORT_PLOTS_HELP = "Render magnitude, relevance and trace plots to standalone HTML."

ERROR_PREFIX = "error"
