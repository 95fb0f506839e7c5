from vexel.cli import main

main()
