"""Which segmentation classes does a saliency map hit?

Builds a handful of synthetic (segmentation, saliency) map pairs where
the "animal" class sits under the bright region and "sky" never does,
then reproduces the hit-rate and size/saliency analyses.
"""

import numpy as np

from salcap import salstats

NAMES = {0: "ground", 1: "animal", 2: "sky"}

rng = np.random.default_rng(5)
pairs = []
for _ in range(10):
    labels = np.zeros((16, 16), dtype=int)
    labels[:4, :] = 2                        # sky band on top
    r, c = rng.integers(5, 11), rng.integers(2, 11)
    labels[r:r + 4, c:c + 4] = 1             # a 4x4 animal somewhere below
    intensity = rng.integers(0, 40, (16, 16))
    intensity[r:r + 4, c:c + 4] = rng.integers(200, 256, (4, 4))  # bright on the animal
    pairs.append(
        (salstats.SegmentationMap(labels, NAMES), salstats.SaliencyMap(intensity))
    )

print("hit rates with a high threshold (245): the most salient classes")
for c in salstats.class_hit_rates(pairs, threshold=245, min_occurrences=5):
    print("  %-8s occurrences %2d  hits %2d  rate %6.2f%%" % (c.name, c.occurrences, c.hits, c.rate))

print("\nhit rates with a low threshold (10): almost everything is inside the mask")
for c in salstats.class_hit_rates(pairs, threshold=10, min_occurrences=5):
    print("  %-8s rate %6.2f%%" % (c.name, c.rate))

print("\nper-instance object size vs mean saliency (first image)")
for p in salstats.size_saliency_distribution(pairs[:1]):
    print("  %-8s size %.4f  mean saliency %.4f" % (p.name, p.normalized_size, p.mean_saliency))

print("\nhit rate is monotone in the threshold:")
for threshold in (0, 64, 128, 192, 250):
    rates = salstats.class_hit_rates(pairs, threshold, 5)
    animal = next(c for c in rates if c.name == "animal")
    print("  threshold %3d -> animal rate %6.2f%%" % (threshold, animal.rate))
