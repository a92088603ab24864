from flat_tax_equilibrium.cli import main

raise SystemExit(main())
