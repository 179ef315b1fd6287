"""EM+SVR against k-means+OLS when the target bends with one predictor."""
from climregion import pipeline, synth
from climregion.pipeline import Method, PipelineConfig

# air temperature = 20 + 2 sin(pi/2 * precipitation) + noise, three regions
lab = synth.generate(synth.sinusoidal_spec(seed=0))
ds = lab.dataset

# last five years are held out
em = PipelineConfig(Method.EM_SVR, target="air_temperature", p=5, seed=0)
km = PipelineConfig(Method.KM_LR, target="air_temperature", p=5, seed=0)
comp = pipeline.compare_methods(ds, em, km)

print("%-8s %8s %8s %8s" % ("region", "EM+SVR", "KM+OLS", "overlap"))
for row in comp.rows:
    print("%-8s %8.3f %8.3f %8.2f" % (row.region_label, row.em_svm_rmse, row.km_lr_rmse,
                                      row.overlap_fraction))

# chosen SVR settings per region
for r, rep in sorted(comp.first.models.cv_reports.items()):
    print(r, rep.chosen_hyperparams)
