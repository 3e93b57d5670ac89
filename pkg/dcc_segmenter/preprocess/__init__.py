# CT preprocessing chain
