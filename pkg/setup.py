# Copyright 2016 Matthias Gazzari
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

'''A Python library to resolve coreference with an actor-critic policy'''

import os, os.path
from setuptools import setup

def readme():
	with open('README.rst') as f:
		return f.read()

with open(os.path.join('acoref', 'version.py'), 'rt') as f:
	exec(f.read())

setup(
	name='acoref',
	version=__version__,
	description=__doc__,
	long_description=readme(),
	author='Matthias Gazzari',
	author_email='matthias.gazzar@cern.ch',
	license='Apache License 2.0',
	packages=['acoref',],
	install_requires=[
		'numpy>=1.22',
		'scipy>=1.7',
		'pydantic>=2.0',
	],
	extras_require={
		'docs':[
			'Sphinx>=1.4.5',
			'sphinx_rtd_theme>=0.1.10a0',
		],
	},
	entry_points={
		'console_scripts': [
			'acoref=acoref.cli:main',
		],
	},
	include_package_data=True,
	zip_safe=False,
	keywords='coreference resolution actor critic reinforcement learning',
	platforms='any',
	python_requires='>=3.9',
	classifiers=[
		'Development Status :: 4 - Beta',
		'License :: OSI Approved :: Apache Software License',
		'Intended Audience :: Science/Research',
		'Programming Language :: Python :: 3',
		'Topic :: Text Processing :: Linguistic',
		'Topic :: Scientific/Engineering :: Artificial Intelligence',
	],
	test_suite="tests",
)
