"""Campaigns, estimators and simulation diagnostics."""

from .campaign import Campaign, CampaignResult, Gate, run_block, run_campaign
from .estimators import EstimatorState, mean_ci, t_half_width

__all__ = ["Campaign", "CampaignResult", "Gate", "run_block", "run_campaign",
           "EstimatorState", "mean_ci", "t_half_width"]
