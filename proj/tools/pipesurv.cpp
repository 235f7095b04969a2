#include "pipesurv/commands.hpp"

int main(int argc, char** argv) { return pipesurv::cli::run(argc, argv); }
