"""Print K, R, kappa and the prolongation count for every shipped system."""

from pathlib import Path

from flatforge.pipeline import design
from flatforge.sysfile import load_system

CORPUS = Path(__file__).resolve().parents[1] / "src" / "flatforge" / "corpus"


def main():
    print(f"{'system':<10} {'K':<8} {'R':<8} {'p':>2}  kappa (lead 1 / lead 2)")
    for path in sorted(CORPUS.glob("*.fsys")):
        doc = load_system(path, rng=0)
        d1, d2 = (design(doc, lead, rng=0) for lead in (1, 2))
        rep = d1.report
        print(f"{path.stem:<10} {str(tuple(rep.K)):<8} {str(tuple(rep.R)):<8} {rep.prolongations:>2}  "
              f"{tuple(d1.bstate.kappa)} / {tuple(d2.bstate.kappa)}")


if __name__ == "__main__":
    main()
