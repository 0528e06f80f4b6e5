"""
⏱️ Benchmark del motor: una probabilidad N=4 con M=32 a 1 y 4 workers
Imprime los tiempos, el speedup y si ambas salidas son idénticas.
"""
import sys
import time
from pathlib import Path

# Raíz del proyecto en sys.path para importar config y tools
sys.path.append(str(Path(__file__).parent.parent))

from tools import bethe_engine as engine
from tools.particle_models import ModelKind, make_params

Y = (0, 1, 2, 3)
X = (1, 2, 4, 5)
T = 0.5


def timed(workers: int):
    params = make_params(ModelKind.ASEP, p=0.6)
    contour = engine.ContourSpec(nodes=32, adaptive=False)
    start = time.perf_counter()
    result = engine.transition_probability(ModelKind.ASEP, Y, X, T, params, contour=contour, workers=workers)
    return result, time.perf_counter() - start


def main() -> int:
    print(f"--- Benchmark: ASEP N={len(Y)}, M=32, Y={Y}, X={X}, t={T} ---")
    single, t1 = timed(1)
    print(f"1 worker : {t1:.3f}s  P={single.value!r}")
    multi, t4 = timed(4)
    print(f"4 workers: {t4:.3f}s  P={multi.value!r}")
    print(f"Speedup  : {t1 / t4:.2f}x")
    identical = single.value == multi.value
    print(f"Salida idéntica: {'sí' if identical else 'NO'}")
    return 0 if identical else 1


if __name__ == "__main__":
    sys.exit(main())
