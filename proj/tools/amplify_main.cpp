#include "amplify/cli.hpp"

int main(int argc, char** argv) { return amplify::cli_main(argc, argv); }
