import time

import numpy as np

from icusynth import data
from icusynth.config import RunConfig
from icusynth.data import SplitSpec, stratified_split, synth_toy_cohort
from icusynth.evaluation import EvalProtocol, utility_report
from icusynth.numerics import RngStream
from icusynth.pipeline import train_generator

t0 = time.perf_counter()


def lap(msg):
    print(f"[{time.perf_counter() - t0:7.1f}s] {msg}", flush=True)


cfg = RunConfig.load(None, ["classifier.patience=10"])
preset = cfg.toy_preset()
cohort = synth_toy_cohort(preset, seed=101)
lap(f"toy cohort n={len(cohort)} outcome rate {cohort.outcomes().mean():.3f}")

train, holdout, holdout_val = stratified_split(cohort, cfg.split_spec(102))
lap(f"split {len(train)}/{len(holdout)}/{len(holdout_val)}")

bundle, logs = train_generator(train, cfg.generator_config(), RngStream(103).child("gen"), "h")
lap(
    f"generator trained: vae recon {logs['vae'][0]['recon']:.3f}->{logs['vae'][-1]['recon']:.3f}, "
    f"diff base {logs['diffusion'][0]['base']:.3f}->{logs['diffusion'][-1]['base']:.3f}"
)

synth = bundle.sample_cohort(train.conditions_with_outcomes(), RngStream(104).child("s"))
lap("one synthetic set sampled")

real_mean = train.values_array().mean(axis=(0, 1))
real_sd = train.values_array().std(axis=(0, 1))
syn_mean = synth.values_array().mean(axis=(0, 1))
lap(f"per-feature |mean diff|/sd: {np.abs(syn_mean - real_mean) / real_sd}")
lap(f"real mask rate {train.mask_array().mean():.3f} synth mask rate {synth.mask_array().mean():.3f}")

protocol = cfg.protocol()
report, _ = utility_report(bundle, train, holdout, holdout_val, protocol, RngStream(105).child("u"))
lap(
    f"delta_TSTR {report['delta_tstr']['value']:.4f}  delta_TRTS {report['delta_trts']['value']:.4f}"
)
trtr = [r["auroc"] for r in report["runs"]["trtr_train"]]
tstr = [r["auroc"] for r in report["runs"]["tstr_train"]]
lap(f"TRTR mean {np.mean(trtr):.4f}  TSTR mean {np.mean(tstr):.4f}")
trtr_e = [r["auroc"] for r in report["runs"]["trtr_evaluate"]]
trts_e = [r["auroc"] for r in report["runs"]["trts_evaluate"]]
lap(f"TRTR_eval mean {np.mean(trtr_e):.4f}  TRTS_eval mean {np.mean(trts_e):.4f}")
