"""Print the cost components and budget totals of the calibrated presets."""
import numpy as np

from surveyopt.cost import (Clusters, Individuals, max_feasible_size, preset, survey_time,
                            total_cost)


def main():
    model, budget, grid = preset("daycare")
    all_items = np.ones(model.M, bool)
    print("day-care")
    print(f"  survey time (all items)     {survey_time(model, all_items):.1f} min")
    print(f"  admin at 120 min            {model.phi * 120 ** model.alpha:,.1f}")
    print(f"  training at n=1466          {model.kappa(1466) * 120:,.1f}")
    print(f"  per-interview at 120 min    {model.eta + 120 * model.p:,.2f}")
    cost = total_cost(model, all_items, Individuals(1330))
    print(f"  all items at n=1330         {cost:,.0f} ({cost / budget - 1:+.2%} of {budget:,.0f})")
    n0 = max_feasible_size(model, np.zeros(model.M, bool), budget, grid)
    print(f"  max n without covariates    {n0.effective_n}")

    for name, size in (("schoolgrants_baseline", Clusters(95, 24)),
                       ("schoolgrants_followup", Clusters(95, 24))):
        model, budget, _ = preset(name)
        cost = total_cost(model, np.ones(model.M, bool), size)
        print(f"{name}")
        print(f"  all items at {size.c}x{size.n_c}          {cost:,.0f} ({cost / budget - 1:+.2%} of {budget:,.0f})")


if __name__ == "__main__":
    main()
