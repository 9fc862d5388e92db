#pragma once

#include "memoloop/backends.hpp"
#include "memoloop/config.hpp"
#include "memoloop/core.hpp"
#include "memoloop/dataset.hpp"
#include "memoloop/error.hpp"
#include "memoloop/eval.hpp"
#include "memoloop/json_io.hpp"
#include "memoloop/pipeline.hpp"
#include "memoloop/prompts.hpp"
#include "memoloop/remote.hpp"
#include "memoloop/service.hpp"
#include "memoloop/store.hpp"
#include "memoloop/templates.hpp"
#include "memoloop/text.hpp"
