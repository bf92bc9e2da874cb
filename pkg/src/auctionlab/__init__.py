"""auctionlab: statistics for tea-auction lot data.

Modules: records (lot model and normalization), clustering (grade/source
clustering), glm (logistic/ANOVA cores), mixlogit (mixture of logistic
regressions), ratiodist (price/valuation ratio distributions), pricing
(linear price models and screens), tslh (latent hierarchical state-space
model with Gibbs estimation), synthetic (season generator), cli.
"""

__version__ = "0.1.0"
