from .chain import ChainModel, build_chain, coordinator_revenue, revenue_to_go
from .welfare import (
    WelfareReport,
    bhw_gsw_closed_form,
    improvement_percentages,
    nsii_gsw_closed_form,
    social_recursion_value,
    sweep,
    welfare_report,
)

__all__ = [
    "ChainModel",
    "WelfareReport",
    "bhw_gsw_closed_form",
    "build_chain",
    "coordinator_revenue",
    "improvement_percentages",
    "nsii_gsw_closed_form",
    "revenue_to_go",
    "social_recursion_value",
    "sweep",
    "welfare_report",
]
