"""Quick check that the compiled stratvar module imports and runs."""

import stratvar as sv


def main():
    pop = sv.Population.normal_groups("neq_mean_eq_var", 2.9, 5.3, 200, 10, sv.DEFAULT_SEED)
    print(pop)
    print("deff", round(pop.design_effect(), 4))

    sample = pop.draw("one_per_stratum", 1)
    v, s2 = sample.collapsed_variance()
    eb, ceb = sample.shrinkage_variance()
    print("mean", round(sample.mean(), 4), "collapsed", round(v, 4), "eb", round(eb, 4), "ceb", round(ceb, 4))

    fit = sv.ShrinkageFit(s2)
    assert len(fit.eb) == len(s2) == 5
    assert fit.a_star >= 2.0

    tiny = sv.Population([[1.0, 2.0, 6.0], [3.0, 8.0, 9.0]])
    for row in tiny.theory()["rows"]:
        if row["convention"] == "exact":
            assert abs(row["var_v"] - row["oracle_variance"]) <= 1e-12 * row["var_v"]

    rows = sv.simulate(preset="table4", replications=200)
    for r in rows:
        print(r["study"], r["estimator"], r["metric"], round(r["value"], 4))
    assert len(rows) == 16
    print("ok")


if __name__ == "__main__":
    main()
