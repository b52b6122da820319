import timeit
import pandas

def benchmark(name, func, setup, sizes, count):
    print(f"starting {name}")
    start = timeit.default_timer()
    results = []
    for size in sizes:
        test = timeit.Timer(func, setup=setup.format(size, count))
        results.append(min(test.timeit(number=1) for _ in range(3)) / count)
    stop = timeit.default_timer()
    print(f"finished {name}, Runtime: ", stop - start)
    return results

setup ="""
from revharm.shapes import icosphere
from revharm.shape import prepare_shape
from revharm.maps import project_onto_mesh
from revharm.initialization import init_from_pointwise
from revharm.solver import MapProblem, SolverConfig, run
shape1 = prepare_shape(icosphere({0}), metric="{metric}", dim={dim})
shape2 = prepare_shape(icosphere({0}).with_vertices(icosphere({0}).vertices * [1.3, 1.0, 0.8]), metric="{metric}", dim={dim})
init = init_from_pointwise(project_onto_mesh(shape1.mesh.vertices * [1.3, 1.0, 0.8], shape2.mesh), shape1, shape2)
problem = MapProblem(shape1, shape2, SolverConfig(max_iter={1}, tol=0.0, geodesic_every=0))
"""

subdivisions = [2, 3, 4, 5]
iterations = 20

time_geodesic = benchmark("geodesic embedding",
        'run(problem, init)',
        setup.replace("{metric}", "geodesic").replace("{dim}", "8"), subdivisions, iterations)

time_euclidean = benchmark("euclidean embedding",
        'run(problem, init)',
        setup.replace("{metric}", "euclidean").replace("{dim}", "3"), subdivisions, iterations)

df = pandas.DataFrame(data={
    "vertices": [10 * 4 ** k + 2 for k in subdivisions],
    "geodesic": time_geodesic,
    "euclidean": time_euclidean,
})

df.to_csv("results/solver_iteration.csv", sep=',',index=False)
