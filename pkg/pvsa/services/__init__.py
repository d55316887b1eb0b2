"""Business logic: parsing, solving, analytic sensitivity, distribution fitting, sampling."""
