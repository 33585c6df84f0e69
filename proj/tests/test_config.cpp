// config tests added with the cli module
