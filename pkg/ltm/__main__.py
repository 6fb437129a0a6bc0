from ltm.main import main

main()
