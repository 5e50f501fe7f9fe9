#pragma once

namespace twoshot::pipeline {

// Exit codes: 0 success, 2 usage or configuration error, 3 runtime or numeric failure.
int run_cli(int argc, char** argv);

}  // namespace twoshot::pipeline
