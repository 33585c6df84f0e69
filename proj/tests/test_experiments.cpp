// experiments tests added with the experiments module
