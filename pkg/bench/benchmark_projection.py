import timeit
import pandas
import numpy as np

def benchmark(name, func, setup, sizes, count):
    print(f"starting {name}")
    start = timeit.default_timer()
    results = []
    for size in sizes:
        test = timeit.Timer(func, setup=setup.format(size, count))
        results.append(min(test.timeit(number=1) for _ in range(5)) / count)
    stop = timeit.default_timer()
    print(f"finished {name}, Runtime: ", stop - start)
    return results

setup ="""
import numpy as np
from revharm.shapes import icosphere
from revharm.projection import EmbeddedSurface
rng = np.random.default_rng(18)
mesh = icosphere({0})
X = np.c_[mesh.vertices, 0.1 * rng.normal(size=(mesh.n_vertices, 5))]
surface = EmbeddedSurface(X, mesh.faces, brute_force_below=0)
points = X[rng.integers(mesh.n_vertices, size={1})] + 0.05 * rng.normal(size=({1}, 8))
surface.project(points[:1])
surface.project(points[:1], brute_force=True)
"""

subdivisions = [1, 2, 3, 4, 5]
count = 2000

time_bvh = benchmark("bvh",
        'surface.project(points)',
        setup, subdivisions, count)

# this gets very slow, so only benchmark it for smaller meshes
time_brute_force = benchmark("brute force",
        'surface.project(points, brute_force=True)',
        setup, subdivisions[:4], count) + [np.nan]

df = pandas.DataFrame(data={
    "faces": [20 * 4 ** k for k in subdivisions],
    "bvh": time_bvh,
    "brute force": time_brute_force,
})

df.to_csv("results/projection.csv", sep=',',index=False)
