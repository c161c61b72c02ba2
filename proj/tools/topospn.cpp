#include "topospn/experiment.hpp"

int main(int argc, char** argv) { return topospn::run_cli(argc, argv); }
