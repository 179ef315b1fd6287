"""Recover planted climate regions from synthetic cell climatologies."""
import numpy as np

from climregion import clustering, grid_store, synth

np.set_printoptions(suppress=True, precision=2, linewidth=100)

# 13x13 grid, seven regions around the reference centroids, 1948-2012
lab = synth.generate(synth.table1_spec(seed=0))
ds = lab.dataset
print(ds.n_cells, "cells,", ds.n_years, "years")

# one 7-vector per cell: the long-term mean of every variable
clim = grid_store.long_term_means(ds)

# number of components by 10-fold cross-validated log-likelihood
k = clustering.select_k_cv(clim, folds=10, seed=0)
print("chosen k:", k)

model = clustering.em_fit(clim, k, seed=0)
regions = clustering.assign_hard(clim, model)
print("region sizes:", regions.sizes().tolist())
print("ARI vs planted labels:", synth.adjusted_rand_index(regions.labels, lab.true_labels))

# component means come back in standardized units; map them to raw units
for j, mean in enumerate(model.scaler.inverse(model.means)):
    print(j, mean)

# k-means baseline on the same points
km = clustering.kmeans_fit(clim, k, seed=0)
print("k-means ARI:", synth.adjusted_rand_index(clustering.kmeans_assign(clim, km).labels,
                                                lab.true_labels))
