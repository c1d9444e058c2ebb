#include "skyplan/cli.hpp"

int main(int argc, char** argv) { return skyplan::run(argc, argv); }
