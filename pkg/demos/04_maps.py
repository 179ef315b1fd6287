"""Write region and error maps as SVG."""
import io
import sys
from pathlib import Path

from climregion import pipeline, render, synth
from climregion.pipeline import Method, PipelineConfig

out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
out.mkdir(parents=True, exist_ok=True)

lab = synth.generate(synth.table1_spec(seed=1))
ds = lab.dataset
res = pipeline.run(ds, PipelineConfig(Method.KM_LR, p=1, seed=1))

# categorical map of the regions
svg = render.render_svg(ds.lat, ds.lon, res.assignment.labels, "region_id",
                        title="k-means regions")
(out / "regions.svg").write_text(svg)

# continuous map of the absolute error in the held-out year
buf = io.StringIO()
pipeline.write_predictions_csv(ds, res.predictions, buf)
buf.seek(0)
lat, lon, err = render.read_field(buf, "abs_error")
(out / "abs_error.svg").write_text(
    render.render_svg(lat, lon, err, "abs_error", title="|error| in 2012"))
print("wrote", out / "regions.svg", "and", out / "abs_error.svg")
