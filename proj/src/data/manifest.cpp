namespace prism { }
