#include "eegpolicy/pipeline.hpp"

int main(int argc, char** argv) { return eegpolicy::run_cli(argc, argv); }
